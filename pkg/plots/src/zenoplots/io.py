"""Readers for the simulation CLI's CSV tables and JSON summaries.

The CSV dialect is deliberately plain: optional ``#`` comment lines, one
header row naming the columns, then numeric or string fields.  Every reader
validates shape up front so a renderer never indexes a half-parsed table;
malformed inputs surface as :class:`PlotInputError` with the file and the
offending column spelled out.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class PlotInputError(Exception):
    """An input file is missing, malformed, or lacks required columns."""


def load_table(path: Path, required: tuple[str, ...] = ()) -> dict[str, np.ndarray]:
    """Parse a CSV into a column dict; numeric columns become float arrays.

    Columns that fail float conversion anywhere (e.g. the ``kind`` tags) are
    kept as string arrays.  Rows whose field count disagrees with the header
    are rejected rather than padded.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise PlotInputError(f"cannot read {path}: {err}") from err
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise PlotInputError(f"{path} has no header row")
    reader = csv.reader(lines)
    header = [c.strip() for c in next(reader)]
    if len(set(header)) != len(header):
        raise PlotInputError(f"{path} has duplicate column names")
    missing = [c for c in required if c not in header]
    if missing:
        raise PlotInputError(
            f"{path} is missing required column(s): {', '.join(missing)}"
        )
    rows = list(reader)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise PlotInputError(
                f"{path} row {i + 1} has {len(row)} fields, header names {len(header)}"
            )
    table: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        raw = [row[j].strip() for row in rows]
        try:
            table[name] = np.array([float(x) for x in raw])
        except ValueError:
            table[name] = np.array(raw, dtype=object)
    return table


def load_summary(path: Path) -> dict:
    """Parse a JSON summary written alongside the CSVs."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as err:
        raise PlotInputError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise PlotInputError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise PlotInputError(f"{path} must hold a JSON object")
    return payload


def mask_rows(table: dict[str, np.ndarray], column: str, value) -> dict[str, np.ndarray]:
    """Restrict every column to the rows where ``column`` equals ``value``."""
    keep = table[column] == value
    return {name: col[keep] for name, col in table.items()}
