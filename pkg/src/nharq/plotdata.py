"""CSV data for plots.

Every kind has a fixed column order.  Rows may carry a ``series`` label (for
several curves in one file); it then becomes the first column.
"""

from __future__ import annotations

import csv
import io
from typing import Mapping

import numpy as np

from .delay import DelayProfile
from .errors import ShapeMismatch

KINDS = ("per_vs_snr", "throughput_vs_snr", "per_surface", "delay_cdf")
COLUMNS = {
    "per_vs_snr": ("snr_db", "zeta"),
    "throughput_vs_snr": ("snr_db", "eta"),
    "per_surface": ("x", "y", "z"),
    "delay_cdf": ("delay", "mass", "cumulative_mass"),
}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _curve(result, ycol):
    """(x, y[, series]) triples from sweep rows or a two-column array."""
    if isinstance(result, np.ndarray):
        if result.size == 0:
            return []
        if result.ndim != 2 or result.shape[1] != 2:
            raise ShapeMismatch(f"expected an (n, 2) array, got shape {result.shape}")
        return [(None, float(x), float(y)) for x, y in result]
    out = []
    for i, row in enumerate(result):
        if not isinstance(row, Mapping):
            raise ShapeMismatch(f"row {i} is not a mapping")
        x = row.get("snr_db", row.get("value"))
        if x is None or ycol not in row:
            raise ShapeMismatch(f"row {i} lacks an snr_db/value or {ycol} entry")
        out.append((row.get("series"), float(x), float(row[ycol])))
    return out


def _surface(result):
    if isinstance(result, Mapping):
        x = np.asarray(result.get("x", ()), dtype=float)
        y = np.asarray(result.get("y", ()), dtype=float)
        z = np.asarray(result.get("z", ()), dtype=float)
        if z.shape != (x.size, y.size):
            raise ShapeMismatch(f"z has shape {z.shape}, axes give {(x.size, y.size)}")
        return [(None, xi, yj, z[i, j]) for i, xi in enumerate(x) for j, yj in enumerate(y)]
    out = []
    for i, row in enumerate(result):
        if not isinstance(row, Mapping) or "x" not in row or "y" not in row:
            raise ShapeMismatch(f"row {i} lacks x or y")
        z = row.get("z", row.get("zeta"))
        if z is None:
            raise ShapeMismatch(f"row {i} lacks z")
        out.append((row.get("series"), float(row["x"]), float(row["y"]), float(z)))
    return out


def _delay(result):
    if isinstance(result, Mapping):
        result = DelayProfile.from_pairs(result.items(), drop_zero=False) if result else \
            DelayProfile(np.empty(0), np.empty(0))
    if not isinstance(result, DelayProfile):
        raise ShapeMismatch("delay_cdf needs a DelayProfile or a {delay: mass} mapping")
    cum = result.cdf()
    return [(None, float(d), float(p), float(c)) for d, p, c in zip(result.support, result.masses, cum)]


def emit_plotdata(result, kind: str, path=None) -> str:
    """Render ``result`` as CSV for ``kind``; also written to ``path`` if given."""
    if kind not in KINDS:
        raise ShapeMismatch(f"kind must be one of {KINDS}")
    if kind == "per_vs_snr":
        rows = _curve(result, "zeta")
    elif kind == "throughput_vs_snr":
        rows = _curve(result, "eta")
    elif kind == "per_surface":
        rows = _surface(result)
    else:
        rows = _delay(result)

    labelled = any(r[0] is not None for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((("series",) if labelled else ()) + COLUMNS[kind])
    for r in rows:
        vals = [_fmt(v) for v in r[1:]]
        if kind == "delay_cdf":
            vals[0] = f"{r[1]:.6g}"
        w.writerow(([r[0]] if labelled else []) + vals)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
