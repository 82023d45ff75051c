"""Normalized data extraction from rendered figures.

Golden-file tests compare what a figure *plots*, not raw pixels: the
fingerprint walks every axes and records titles, labels, scales, line data,
and histogram bar geometry with floats rounded to nine decimals.  Hashing
the canonical JSON of that structure gives a regression check that is exact
on content yet immune to font rasterization details.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from matplotlib.colors import to_hex
from matplotlib.figure import Figure
from matplotlib.patches import Polygon, Rectangle


def iter_axes(fig: Figure):
    """All axes in draw order, including insets registered as child axes."""
    for ax in fig.axes:
        yield ax
        yield from ax.child_axes


def _round(value) -> float | None:
    v = float(value)
    if not np.isfinite(v):
        return None  # JSON has no inf/nan; None keeps the slot visible
    return round(v, 9)


def _seq(values) -> list:
    return [_round(v) for v in np.asarray(values, dtype=float).ravel()]


def figure_fingerprint(fig: Figure) -> dict:
    """Extract the plotted content of ``fig`` as a JSON-ready dict."""
    axes_out = []
    all_axes = list(iter_axes(fig))
    for ax in all_axes:
        lines = []
        for ln in ax.get_lines():
            lines.append(
                {
                    "label": str(ln.get_label()),
                    "color": to_hex(ln.get_color()),
                    "linestyle": str(ln.get_linestyle()),
                    "x": _seq(ln.get_xdata()),
                    "y": _seq(ln.get_ydata()),
                }
            )
        patches = []
        for patch in ax.patches:
            if isinstance(patch, Rectangle):
                patches.append(
                    {
                        "x0": _round(patch.get_x()),
                        "width": _round(patch.get_width()),
                        "height": _round(patch.get_height()),
                        "color": to_hex(patch.get_facecolor(), keep_alpha=True),
                    }
                )
            elif isinstance(patch, Polygon):
                patches.append(
                    {
                        "vertices": _seq(patch.get_xy()),
                        "color": to_hex(patch.get_facecolor(), keep_alpha=True),
                    }
                )
        scatters = [
            {"offsets": _seq(coll.get_offsets())} for coll in ax.collections
        ]
        legend = ax.get_legend()
        axes_out.append(
            {
                "title": ax.get_title(),
                "xlabel": ax.get_xlabel(),
                "ylabel": ax.get_ylabel(),
                "xscale": ax.get_xscale(),
                "yscale": ax.get_yscale(),
                "lines": lines,
                "patches": patches,
                "scatters": scatters,
                "legend": [t.get_text() for t in legend.get_texts()]
                if legend is not None
                else [],
            }
        )
    return {"n_axes": len(all_axes), "axes": axes_out}


def fingerprint_json(fig: Figure) -> str:
    """Canonical JSON serialization of the fingerprint."""
    return json.dumps(
        figure_fingerprint(fig), sort_keys=True, separators=(",", ":")
    )


def fingerprint_hash(fig: Figure) -> str:
    """sha256 hex digest of the canonical fingerprint JSON."""
    return hashlib.sha256(fingerprint_json(fig).encode()).hexdigest()
