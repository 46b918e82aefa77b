"""Discrete delay distributions measured in slots."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .errors import SupportExplosion

GRID = 1e-4  # delays are multiples of this many slots
PRUNE = 1e-15
MAX_SUPPORT = 10_000_000
_DIRECT_LIMIT = 2000
_SPARSE_LIMIT = 1_000_000  # pairwise products before switching to a dense lattice


@dataclass(frozen=True)
class DelayProfile:
    support: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        p = np.asarray(self.masses, dtype=float)
        if s.shape != p.shape or s.ndim != 1:
            raise ValueError("support and masses must be 1-d arrays of equal length")
        if s.size > 1 and np.any(np.diff(s) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(p < 0):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "masses", p)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, float]], drop_zero: bool = True) -> "DelayProfile":
        """Merge (delay, mass) pairs that land on the same grid point."""
        acc = {}
        for d, w in pairs:
            key = int(round(d / GRID))
            acc[key] = acc.get(key, 0.0) + float(w)
        keys = sorted(k for k, w in acc.items() if w > 0 or not drop_zero)
        return cls(np.array([k * GRID for k in keys]), np.array([acc[k] for k in keys]))

    def __len__(self):
        return self.support.size

    def as_dict(self) -> dict:
        return {round(float(d), 6): float(p) for d, p in zip(self.support, self.masses)}

    @property
    def total(self) -> float:
        return float(math.fsum(self.masses))

    def mean(self) -> float:
        return float(self.support @ self.masses / self.masses.sum())

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses)

    def quantile(self, q: float) -> float:
        """Smallest delay whose cumulative mass reaches ``q``."""
        c = self.cdf() / self.masses.sum()
        i = int(np.searchsorted(c, q - 1e-15, side="left"))
        return float(self.support[min(i, len(c) - 1)])

    def summary(self) -> dict:
        return {"p50": self.quantile(0.5), "p99": self.quantile(0.99),
                "p99.999": self.quantile(0.99999), "mean": self.mean()}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delay", "mass", "cumulative_mass"])
        for d, p, c in zip(self.support, self.masses, self.cdf()):
            w.writerow([f"{d:.6g}", repr(float(p)), repr(float(c))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _ticks(support: np.ndarray) -> np.ndarray:
    t = np.round(support / GRID)
    if np.any(np.abs(support / GRID - t) > 1e-6):
        raise ValueError(f"delays must be multiples of {GRID} slots")
    return t.astype(np.int64)


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if min(a.size, b.size) <= _DIRECT_LIMIT:
        out = np.convolve(a, b)
    else:
        out = np.clip(fftconvolve(a, b), 0.0, None)
    return out


def _mul(x, y):
    """Convolve two sparse ``(ticks, masses)`` pmfs on the lattice."""
    (xi, xp), (yi, yp) = x, y
    if xi.size * yi.size <= _SPARSE_LIMIT:
        u, inv = np.unique((xi[:, None] + yi[None, :]).ravel(), return_inverse=True)
        out = np.bincount(inv.ravel(), weights=(xp[:, None] * yp[None, :]).ravel())
    else:
        a = np.zeros(int(xi[-1] - xi[0]) + 1)
        b = np.zeros(int(yi[-1] - yi[0]) + 1)
        a[xi - xi[0]] = xp
        b[yi - yi[0]] = yp
        out = _conv(a, b)
        u = xi[0] + yi[0] + np.arange(out.size)
    keep = out >= PRUNE * 1e-3
    return u[keep], out[keep]


def convolve_power(single: DelayProfile, N: int) -> DelayProfile:
    """Distribution of the sum of ``N`` independent copies of ``single``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    ticks = _ticks(single.support)
    step = reduce(math.gcd, ticks.tolist())
    idx = (ticks - ticks[0]) // step
    width = N * int(idx[-1]) + 1
    if width > MAX_SUPPORT:
        raise SupportExplosion(f"stream support would span {width} grid points")
    # exponentiation by squaring on sparse (lattice index, mass) pairs
    result = None
    power = (idx.astype(np.int64), single.masses.copy())
    n = N
    while n:
        if n & 1:
            result = power if result is None else _mul(result, power)
        n >>= 1
        if n:
            power = _mul(power, power)
    pos, pmf = result
    keep = pmf >= PRUNE
    support = (N * ticks[0] + pos[keep] * step) * GRID
    return DelayProfile(support, pmf[keep])
