"""Rendering invariants: read-only inputs, determinism, layout guarantees."""

import io as _io

import matplotlib.pyplot as plt
import numpy as np
import pytest

from zenoplots.extract import iter_axes
from zenoplots.figures import PlotSpec, build_fig3, build_fig4, build_fig5, render
from zenoplots.io import load_table, mask_rows
from test_golden import spec_for


def png_bytes(fig) -> bytes:
    buf = _io.BytesIO()
    fig.savefig(buf, format="png")
    plt.close(fig)
    return buf.getvalue()


@pytest.mark.parametrize("figure_id", ["fig3", "fig4", "fig5", "fig6"])
def test_render_is_read_only_and_writes_image(figure_id, fixtures, tmp_path):
    spec = spec_for(figure_id, fixtures, tmp_path)
    before = {p: p.read_bytes() for p in spec.inputs.values()}
    out = render(spec)
    assert out.exists() and out.stat().st_size > 0
    for p, content in before.items():
        assert p.read_bytes() == content, f"render mutated its input {p}"


def test_same_inputs_give_identical_pixels(fixtures, tmp_path):
    spec = spec_for("fig4", fixtures, tmp_path)
    first = png_bytes(build_fig4(spec))
    second = png_bytes(build_fig4(spec))
    assert first == second


def test_fig5_all_ones_flat_line_renders(tmp_path):
    rows = "\n".join(f"{n},10,10,10,1,1" for n in (2, 3, 4))
    csv = tmp_path / "flat.csv"
    csv.write_text(
        "# units: time in tau, angles in radians\n"
        "n,tts_linear,tts_lindblad_opt,tts_mlp_opt,G_lindblad,G_mlp\n" + rows + "\n"
    )
    spec = PlotSpec("fig5", {"speedup": csv}, tmp_path / "flat.png")
    fig = build_fig5(spec)
    try:
        curves = [
            ln for ln in fig.axes[0].get_lines() if str(ln.get_label()) != "no speedup"
        ]
        assert len(curves) == 2
        for ln in curves:
            assert np.allclose(ln.get_ydata(), 1.0)
    finally:
        plt.close(fig)
    render(spec)
    assert (tmp_path / "flat.png").stat().st_size > 0


def test_fig4_bimodal_ensemble_shows_two_modes(fixtures, tmp_path):
    # the MLP fixture is bimodal: mass below the cutoff and a broad upper lobe
    spec = spec_for("fig4", fixtures, tmp_path)
    shots = load_table(spec.path("shots"))
    vals = mask_rows(shots, "kind", "mlp_ofs")["final_fidelity"]
    hist, edges = np.histogram(vals, bins=np.linspace(0.0, 1.0, 41))
    lower = hist[edges[:-1] < 0.05]
    upper = hist[edges[:-1] >= 0.1]
    assert lower.max() > 0 and upper.max() > 0, "fixture lost its two modes"
    gap = hist[(edges[:-1] >= 0.05) & (edges[:-1] < 0.1)]
    assert gap.max() < min(lower.max(), upper.max())
    fig = build_fig4(spec)
    try:
        # both families drew a filled histogram footprint with real height
        polys = fig.axes[0].patches
        assert len(polys) == 2
        for poly in polys:
            assert poly.get_xy()[:, 1].max() > 0
    finally:
        plt.close(fig)


def test_fig3_has_spectrum_inset(fixtures, tmp_path):
    spec = spec_for("fig3", fixtures, tmp_path)
    fig = build_fig3(spec)
    try:
        assert len(list(iter_axes(fig))) == 3  # schedules, fidelities, inset
        inset = fig.axes[0].child_axes[0]
        assert inset.get_title() == "cost-operator spectrum"
        # one curve per eigenvalue branch plus the bold gap trace
        assert len(inset.get_lines()) == 5
    finally:
        plt.close(fig)


@pytest.mark.parametrize("figure_id", ["fig3", "fig5"])
def test_log_axis_option_renders(figure_id, fixtures, tmp_path):
    spec = spec_for(figure_id, fixtures, tmp_path)
    spec = PlotSpec(spec.figure_id, spec.inputs, spec.output, log_axes=True)
    out = render(spec)
    assert out.stat().st_size > 0
