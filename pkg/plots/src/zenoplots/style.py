"""Pinned plot style.

The renderers promise byte-identical output for identical inputs, so every
style knob that could drift with a user's matplotlibrc is fixed here and
applied through ``rc_context`` (never mutating global state).  The palette
keys are the ``kind`` tags the simulation CLI writes into its CSVs.
"""

from __future__ import annotations

STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "figure.facecolor": "white",
    "savefig.facecolor": "white",
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.titlesize": 10.0,
    "axes.labelsize": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "grid.linewidth": 0.6,
    "lines.linewidth": 1.4,
    "legend.frameon": False,
    "legend.fontsize": 8.0,
    "xtick.labelsize": 8.0,
    "ytick.labelsize": 8.0,
    "svg.hashsalt": "zenoplots",
}

# one color per schedule family, shared across all figures
KIND_COLORS = {
    "linear": "#7f7f7f",
    "lindblad_ofs": "#1f77b4",
    "mlp_ofs": "#d62728",
    "single_theta": "#1f77b4",
    "per_qubit": "#2ca02c",
}

KIND_LABELS = {
    "linear": "linear ramp",
    "lindblad_ofs": "Lindblad-OFS",
    "mlp_ofs": "MLP-OFS",
    "single_theta": "single-axis",
    "per_qubit": "per-qubit",
}

# line styles distinguish horizons when several share one panel
HORIZON_STYLES = ("-", "--", "-.", ":")


def kind_color(kind: str) -> str:
    return KIND_COLORS.get(kind, "#333333")


def kind_label(kind: str) -> str:
    return KIND_LABELS.get(kind, kind)
