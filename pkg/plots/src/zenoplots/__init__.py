"""Render zenodrag CSV/JSON outputs into the four standard figures.

The simulation CLI emits flat CSV tables (with a units comment line and a
header row) plus JSON summaries; this package turns them into images.  Four
figure ids are supported:

- ``fig3``: optimized measurement-axis schedules and fidelity traces, with a
  cost-operator spectrum inset,
- ``fig4``: overlaid final-fidelity histograms for the two optimized schedule
  families, with the post-selection cutoff marked,
- ``fig5``: relative speedup versus problem size for both families,
- ``fig6``: per-qubit schedule divergence versus optimizer iteration.

Rendering is read-only on its inputs and, under the pinned style sheet,
byte-deterministic: the same input files produce the same image.
"""

from .figures import PlotSpec, render
from .io import PlotInputError

__all__ = ["PlotSpec", "render", "PlotInputError"]

__version__ = "0.1.0"
