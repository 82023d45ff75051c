"""The four figure renderers.

Each builder is a pure function from input tables to a matplotlib Figure;
:func:`render` dispatches on the figure id and writes the image.  All
styling comes from the pinned sheet in :mod:`zenoplots.style` via
``rc_context``, so rendering never touches global matplotlib state and the
output is reproducible byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import matplotlib
import numpy as np

matplotlib.use("Agg")  # batch package: images only, no display backend

import matplotlib.pyplot as plt
from matplotlib import rc_context

from .io import PlotInputError, load_summary, load_table, mask_rows
from .style import HORIZON_STYLES, STYLE, kind_color, kind_label

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class PlotSpec:
    """What to render: a figure id, its input files, and style options.

    ``inputs`` maps role names to paths; the roles each figure expects are
    documented on its builder.  ``log_axes`` switches the axis the figure
    designates as its log candidate (spectrum inset for fig3, speedup axis
    for fig5, divergence axis for fig6).
    """

    figure_id: str
    inputs: Mapping[str, Path] = field(default_factory=dict)
    output: Path = Path("figure.png")
    log_axes: bool = False
    cutoff: float = 0.05
    bins: int = 40

    def path(self, role: str) -> Path:
        try:
            return Path(self.inputs[role])
        except KeyError:
            raise PlotInputError(
                f"{self.figure_id} needs an input file for role '{role}'"
            ) from None

    def optional(self, role: str) -> Path | None:
        p = self.inputs.get(role)
        return Path(p) if p is not None else None


def _horizon_style(index: int) -> str:
    return HORIZON_STYLES[index % len(HORIZON_STYLES)]


def build_fig3(spec: PlotSpec) -> plt.Figure:
    """Schedules and fidelity traces; roles: schedules, fidelities, spectrum.

    Left panel: optimized measurement-axis schedules per horizon with the
    linear ramp for reference, plus the cost-operator spectrum inset.  Right
    panel: fidelity under the averaged evolution for every schedule kind.
    """
    sched = load_table(spec.path("schedules"), required=("T_f", "kind", "t", "theta"))
    fid = load_table(spec.path("fidelities"), required=("T_f", "kind", "t", "fidelity"))
    spectrum = load_table(spec.path("spectrum"), required=("theta", "gap"))
    lam_cols = sorted(
        (c for c in spectrum if c.startswith("lambda_")),
        key=lambda c: int(c.split("_")[1]),
    )
    horizons = sorted(set(fid["T_f"].tolist()) | set(sched["T_f"].tolist()))

    with rc_context(STYLE):
        fig, (ax_s, ax_f) = plt.subplots(1, 2, figsize=(8.6, 3.4))
        fig.subplots_adjust(left=0.07, right=0.985, bottom=0.14, top=0.91, wspace=0.24)

        for i, T in enumerate(horizons):
            ls = _horizon_style(i)
            ax_s.plot(
                [0.0, T],
                [0.0, HALF_PI],
                color=kind_color("linear"),
                linestyle=ls,
                linewidth=1.0,
                label="_nolegend_",
            )
            for kind in ("lindblad_ofs", "mlp_ofs"):
                rows = mask_rows(mask_rows(sched, "kind", kind), "T_f", T)
                if rows["t"].size:
                    ax_s.plot(
                        rows["t"],
                        rows["theta"],
                        color=kind_color(kind),
                        linestyle=ls,
                        label="_nolegend_",
                    )
            for kind in ("linear", "lindblad_ofs", "mlp_ofs"):
                rows = mask_rows(mask_rows(fid, "kind", kind), "T_f", T)
                if rows["t"].size:
                    ax_f.plot(
                        rows["t"],
                        rows["fidelity"],
                        color=kind_color(kind),
                        linestyle=ls,
                        label=f"{kind_label(kind)}, T_f={T:g}τ",
                    )

        ax_s.set_xlabel("t [τ]")
        ax_s.set_ylabel("θ [rad]")
        ax_s.set_title("optimized measurement-axis schedules")
        ax_s.set_ylim(-0.05, HALF_PI + 0.1)
        ax_f.set_xlabel("t [τ]")
        ax_f.set_ylabel("fidelity")
        ax_f.set_title("fidelity under averaged evolution")
        ax_f.legend(loc="upper left")

        ax_in = ax_s.inset_axes((0.58, 0.10, 0.40, 0.36))
        for col in lam_cols:
            ax_in.plot(spectrum["theta"], spectrum[col], color="#999999", linewidth=0.7)
        ax_in.plot(spectrum["theta"], spectrum["gap"], color="#000000", linewidth=1.3)
        ax_in.set_title("cost-operator spectrum", fontsize=7)
        ax_in.set_xlabel("θ [rad]", fontsize=7)
        ax_in.tick_params(labelsize=6)
        ax_in.grid(False)
        if spec.log_axes:
            ax_in.set_yscale("log")
    return fig


def build_fig4(spec: PlotSpec) -> plt.Figure:
    """Final-fidelity histograms; roles: shots (required), summary (optional).

    The two schedule families are overlaid as translucent density histograms
    with the post-selection cutoff drawn as a dashed vertical line.  When the
    summary JSON is given, its cutoff wins over ``spec.cutoff`` and the
    post-selected means are marked per family.
    """
    shots = load_table(spec.path("shots"), required=("kind", "shot", "final_fidelity"))
    summary_path = spec.optional("summary")
    summary = load_summary(summary_path) if summary_path is not None else {}
    cutoff = float(summary.get("cutoff", spec.cutoff))
    kinds = [k for k in ("lindblad_ofs", "mlp_ofs") if np.any(shots["kind"] == k)]
    if not kinds:
        raise PlotInputError(
            f"{spec.path('shots')} has no rows for either schedule family"
        )

    with rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.2, 3.5))
        fig.subplots_adjust(left=0.11, right=0.97, bottom=0.13, top=0.91)
        edges = np.linspace(0.0, 1.0, spec.bins + 1)
        for kind in kinds:
            vals = mask_rows(shots, "kind", kind)["final_fidelity"]
            ax.hist(
                vals,
                bins=edges,
                density=True,
                histtype="stepfilled",
                alpha=0.45,
                color=kind_color(kind),
                edgecolor=kind_color(kind),
                label=kind_label(kind),
            )
        ax.axvline(
            cutoff,
            color="#222222",
            linestyle="--",
            linewidth=1.2,
            label=f"cutoff {cutoff:g}",
        )
        for kind in kinds:
            stats = summary.get(kind)
            if isinstance(stats, dict) and "post_selected_mean" in stats:
                ax.axvline(
                    float(stats["post_selected_mean"]),
                    color=kind_color(kind),
                    linestyle=":",
                    linewidth=1.0,
                    label=f"{kind_label(kind)} post-selected mean",
                )
        ax.set_xlabel("final fidelity")
        ax.set_ylabel("density")
        ax.set_title("final-fidelity ensembles")
        ax.legend(loc="upper right")
    return fig


def build_fig5(spec: PlotSpec) -> plt.Figure:
    """Speedup versus problem size; roles: speedup (required), inset (optional).

    Both families' relative speedup curves share one axes with the
    no-speedup line at 1; the optional inset holds the 3-SAT points.
    """
    table = load_table(spec.path("speedup"), required=("n", "G_lindblad", "G_mlp"))
    inset_path = spec.optional("inset")
    inset = (
        load_table(inset_path, required=("n", "G_lindblad", "G_mlp"))
        if inset_path is not None
        else None
    )

    with rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.2, 3.5))
        fig.subplots_adjust(left=0.12, right=0.97, bottom=0.13, top=0.91)
        order = np.argsort(table["n"])
        ns = table["n"][order]
        ax.axhline(1.0, color="#7f7f7f", linestyle="--", linewidth=1.0, label="no speedup")
        ax.plot(
            ns,
            table["G_lindblad"][order],
            color=kind_color("lindblad_ofs"),
            marker="o",
            label=kind_label("lindblad_ofs"),
        )
        ax.plot(
            ns,
            table["G_mlp"][order],
            color=kind_color("mlp_ofs"),
            marker="s",
            label=kind_label("mlp_ofs"),
        )
        ax.set_xticks(ns)
        ax.set_xlabel("number of qubits n")
        ax.set_ylabel(r"relative speedup $\mathcal{G}$")
        ax.set_title("time-to-solution speedup")
        if spec.log_axes:
            ax.set_yscale("log")
        ax.legend(loc="upper left")
        if inset is not None:
            ax_in = ax.inset_axes((0.64, 0.62, 0.33, 0.32))
            ax_in.scatter(
                inset["n"], inset["G_lindblad"], color=kind_color("lindblad_ofs"), s=18
            )
            ax_in.scatter(inset["n"], inset["G_mlp"], color=kind_color("mlp_ofs"), s=18)
            ax_in.axhline(1.0, color="#7f7f7f", linestyle="--", linewidth=0.8)
            ax_in.set_xticks(np.unique(inset["n"]))
            ax_in.set_title("3-SAT", fontsize=7)
            ax_in.tick_params(labelsize=6)
            ax_in.grid(False)
    return fig


def build_fig6(spec: PlotSpec) -> plt.Figure:
    """Per-qubit schedule divergence; role: distance.

    One trace per instance of the mean pairwise distance between the
    per-qubit schedules, against optimizer iteration.  Log scale by default
    via ``log_axes`` so the symmetric instance's collapse stays visible.
    """
    table = load_table(spec.path("distance"), required=("instance", "iteration", "dbar"))
    instance_colors = ("#9467bd", "#17becf", "#bcbd22")

    with rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.2, 3.5))
        fig.subplots_adjust(left=0.12, right=0.97, bottom=0.13, top=0.91)
        for i, inst in enumerate(sorted(set(table["instance"].tolist()))):
            rows = mask_rows(table, "instance", inst)
            order = np.argsort(rows["iteration"])
            ax.plot(
                rows["iteration"][order],
                rows["dbar"][order],
                color=instance_colors[i % len(instance_colors)],
                marker=".",
                markersize=4,
                label=f"instance {inst:g}",
            )
        ax.set_xlabel("optimizer iteration")
        ax.set_ylabel(r"schedule divergence $\bar{d}_{\ell_2}$")
        ax.set_title("per-qubit schedule divergence")
        if spec.log_axes:
            ax.set_yscale("log")
        ax.legend(loc="center right")
    return fig


_BUILDERS = {
    "fig3": build_fig3,
    "fig4": build_fig4,
    "fig5": build_fig5,
    "fig6": build_fig6,
}


def render(spec: PlotSpec) -> Path:
    """Render ``spec`` and write its image; returns the output path."""
    try:
        builder = _BUILDERS[spec.figure_id]
    except KeyError:
        raise PlotInputError(
            f"unknown figure id '{spec.figure_id}' (expected one of {sorted(_BUILDERS)})"
        ) from None
    fig = builder(spec)
    out = Path(spec.output)
    with rc_context(STYLE):
        try:
            fig.savefig(out)
        except OSError as err:
            raise PlotInputError(f"cannot write {out}: {err}") from err
        finally:
            plt.close(fig)
    return out
