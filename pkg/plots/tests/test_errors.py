"""Malformed inputs fail descriptively and exit nonzero through the CLI."""

import pytest

from zenoplots.cli import main
from zenoplots.figures import PlotSpec, render
from zenoplots.io import PlotInputError, load_table


def write(path, text):
    path.write_text(text)
    return path


def test_missing_column_is_named(tmp_path):
    bad = write(tmp_path / "shots.csv", "kind,shot\nlindblad_ofs,0\n")
    with pytest.raises(PlotInputError, match="final_fidelity"):
        load_table(bad, required=("kind", "shot", "final_fidelity"))


def test_missized_row_is_rejected(tmp_path):
    bad = write(
        tmp_path / "shots.csv",
        "kind,shot,final_fidelity\nlindblad_ofs,0,0.3\nmlp_ofs,1\n",
    )
    with pytest.raises(PlotInputError, match="row 2 has 2 fields"):
        load_table(bad)


def test_empty_file_is_rejected(tmp_path):
    bad = write(tmp_path / "empty.csv", "# units: time in tau, angles in radians\n")
    with pytest.raises(PlotInputError, match="no header row"):
        load_table(bad)


def test_duplicate_columns_rejected(tmp_path):
    bad = write(tmp_path / "dup.csv", "t,theta,theta\n0,1,2\n")
    with pytest.raises(PlotInputError, match="duplicate"):
        load_table(bad)


def test_unreadable_file_is_reported(tmp_path):
    with pytest.raises(PlotInputError, match="cannot read"):
        load_table(tmp_path / "absent.csv")


def test_render_unknown_figure_id(tmp_path):
    with pytest.raises(PlotInputError, match="unknown figure id"):
        render(PlotSpec("fig7", {}, tmp_path / "x.png"))


def test_missing_role_is_reported(tmp_path):
    with pytest.raises(PlotInputError, match="role 'distance'"):
        render(PlotSpec("fig6", {}, tmp_path / "x.png"))


def test_cli_exit_nonzero_on_bad_input(tmp_path, capsys):
    bad = write(tmp_path / "shots.csv", "kind,shot\nlindblad_ofs,0\n")
    code = main(["fig4", "--shots", str(bad), "-o", str(tmp_path / "f.png")])
    captured = capsys.readouterr()
    assert code == 2
    assert "final_fidelity" in captured.err
    assert not (tmp_path / "f.png").exists()


def test_cli_exit_zero_on_good_input(fixtures, tmp_path, capsys):
    out = tmp_path / "fig6.png"
    code = main(["fig6", "--distance", str(fixtures / "fig6_distance.csv"),
                 "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert out.exists() and out.stat().st_size > 0
    assert str(out) in captured.out
