"""Finite-state Markov model of a Rayleigh block-fading channel.

The envelope (unit mean power) is quantized into ``L`` intervals
``[eta_l, eta_{l+1})`` with ``eta_1 = 0`` and ``eta_{L+1} = inf``.  The
interior thresholds are chosen so that every state has the same average
duration.  Transitions only go to neighbouring states and follow from the
level-crossing rate of the envelope.

Durations are computed with the Doppler frequency normalized to one, so the
partition depends on ``L`` alone and the Doppler only enters through the
product ``f_D * t_TB``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleBlockDuration, InvalidInterval, NoConvergence, ParseError

SQRT_2PI = math.sqrt(2.0 * math.pi)
PARTITION_C = 3.0446  # default block lengths per fading state
_MAX_ITER = 10_000


def level_crossing_rate(eta, f_D: float = 1.0):
    """Expected number of crossings of envelope level ``eta`` per second."""
    eta = np.asarray(eta, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        out = np.where(np.isinf(eta), 0.0, SQRT_2PI * eta * f_D * np.exp(-eta * eta))
    return float(out) if out.ndim == 0 else out


def _tail(eta: float) -> float:
    return 0.0 if math.isinf(eta) else math.exp(-eta * eta)


def _check_interval(eta_lo, eta_hi):
    if not (eta_lo >= 0.0 and eta_hi > eta_lo):
        raise InvalidInterval(f"need 0 <= eta_lo < eta_hi, got [{eta_lo}, {eta_hi}]")


def state_marginal(eta_lo: float, eta_hi: float) -> float:
    """Probability that the envelope lies in ``[eta_lo, eta_hi)``."""
    _check_interval(eta_lo, eta_hi)
    return _tail(eta_lo) - _tail(eta_hi)


def state_snr(eta_lo: float, eta_hi: float, snr_avg: float) -> float:
    """Mean SNR conditioned on the envelope lying in ``[eta_lo, eta_hi)``."""
    _check_interval(eta_lo, eta_hi)
    if not snr_avg > 0:
        raise ValueError("snr_avg must be positive")

    def moment(x):
        return 0.0 if math.isinf(x) else math.exp(-x * x) * (x * x + 1.0)

    return snr_avg * (moment(eta_lo) - moment(eta_hi)) / state_marginal(eta_lo, eta_hi)


# -- equal-duration partition ------------------------------------------------


def _duration(a, b):
    """Average normalized sojourn time in ``[a, b)``; ``b`` may be an array."""
    b = np.asarray(b, dtype=float)
    return (math.exp(-a * a) - np.exp(-b * b)) / (level_crossing_rate(a) + level_crossing_rate(b))


def _duration_last(a: float) -> float:
    n = level_crossing_rate(a)
    return math.inf if n == 0.0 else math.exp(-a * a) / n


def _next_threshold(a: float, T: float) -> Optional[float]:
    """Smallest ``b > a`` with ``_duration(a, b) == T`` or None if unreachable."""
    grid = a + np.geomspace(1e-9, 8.0, 2000)
    vals = _duration(a, grid) - T
    idx = np.flatnonzero((vals[:-1] < 0.0) & (vals[1:] >= 0.0))
    if idx.size == 0:
        return None
    i = int(idx[0])
    return brentq(lambda b: float(_duration(a, b)) - T, grid[i], grid[i + 1],
                  xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=_MAX_ITER)


def _chain_thresholds(T: float, L: int) -> Optional[List[float]]:
    th = [0.0]
    for _ in range(L - 1):
        b = _next_threshold(th[-1], T)
        if b is None:
            return None
        th.append(b)
    return th


@lru_cache(maxsize=None)
def _normalized_partition(L: int):
    """Lower edges and common normalized duration for ``L`` states."""
    if L == 1:
        return (0.0,), math.inf

    def resid(T):
        th = _chain_thresholds(T, L)
        if th is None:
            return -1.0  # T too long to fit L-1 interior states
        return _duration_last(th[-1]) - T

    lo, hi = 1e-8, 1.0
    while resid(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise NoConvergence("could not bracket the common state duration")
    if resid(lo) <= 0.0:
        raise NoConvergence(f"partition with L={L} states has no bracket", residual=resid(lo))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    else:
        raise NoConvergence("duration bisection exhausted", residual=hi - lo)
    th = _chain_thresholds(lo, L)
    return tuple(th), lo


def state_duration(L: int) -> float:
    """Common average state duration for ``L`` states, in units of ``1/f_D``."""
    return _normalized_partition(int(L))[1]


def states_for_partition(fd_ttb: float, c: float = PARTITION_C, L_max: int = 64) -> int:
    """Number of states whose average duration is closest to ``c`` blocks."""
    best, best_err = 1, math.inf
    for L in range(2, L_max + 1):
        err = abs(state_duration(L) / fd_ttb - c)
        if err < best_err:
            best, best_err = L, err
        elif state_duration(L) / fd_ttb < c:
            break
    return best


# -- parameters and model -----------------------------------------------------


@dataclass(frozen=True)
class FadingSpec:
    f_D: float
    t_TB: float
    B: float
    snr_avg: float
    L: int

    def __post_init__(self):
        for name in ("f_D", "t_TB", "B", "snr_avg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if self.n < 1:
            raise ValueError("B * t_TB must round to at least one symbol")

    @property
    def n(self) -> int:
        return int(round(self.B * self.t_TB))

    @property
    def fd_ttb(self) -> float:
        return self.f_D * self.t_TB

    @classmethod
    def from_product(cls, fd_ttb: float, L: int, snr_avg: float, n: int = 100,
                     t_TB: float = 1.4e-4) -> "FadingSpec":
        """Build a spec from the normalized Doppler ``f_D * t_TB``."""
        return cls(f_D=fd_ttb / t_TB, t_TB=t_TB, B=n / t_TB, snr_avg=snr_avg, L=L)


def equal_duration_partition(spec: FadingSpec) -> List[float]:
    """Interior thresholds ``eta_2 .. eta_L`` of the equal-duration partition."""
    return list(_normalized_partition(int(spec.L))[0][1:])


@dataclass(frozen=True)
class FadingModel:
    spec: FadingSpec
    thresholds: np.ndarray  # lower edges eta_1..eta_L; eta_{L+1} is infinite
    marginals: np.ndarray
    state_snrs: np.ndarray
    transitions: np.ndarray
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def L(self) -> int:
        return len(self.marginals)

    @property
    def edges(self) -> np.ndarray:
        return np.append(self.thresholds, np.inf)

    @property
    def mean_duration(self) -> float:
        """Average state duration in seconds."""
        return state_duration(self.L) / self.spec.f_D

    @property
    def c(self) -> float:
        """Average state duration measured in transport blocks."""
        return self.mean_duration / self.spec.t_TB

    def to_dict(self) -> dict:
        return {
            "f_D": self.spec.f_D,
            "t_TB": self.spec.t_TB,
            "B": self.spec.B,
            "snr_avg_db": 10.0 * math.log10(self.spec.snr_avg),
            "L": self.L,
            "thresholds": [float(x) for x in self.thresholds],
            "marginals": [float(x) for x in self.marginals],
            "state_snrs_db": [10.0 * math.log10(x) for x in self.state_snrs],
            "transitions": [[float(x) for x in row] for row in self.transitions],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "FadingModel":
        try:
            spec = FadingSpec(f_D=float(d["f_D"]), t_TB=float(d["t_TB"]), B=float(d["B"]),
                              snr_avg=10.0 ** (float(d["snr_avg_db"]) / 10.0), L=int(d["L"]))
            return cls(spec,
                       np.array(d["thresholds"], dtype=float),
                       np.array(d["marginals"], dtype=float),
                       10.0 ** (np.array(d["state_snrs_db"], dtype=float) / 10.0),
                       np.array(d["transitions"], dtype=float))
        except KeyError as exc:
            raise ParseError(f"fading model is missing field {exc.args[0]!r}", field=exc.args[0]) from None

    @classmethod
    def from_json(cls, text_or_path: str) -> "FadingModel":
        text = text_or_path
        if not text_or_path.lstrip().startswith("{"):
            with open(text_or_path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _solve_down(flow: float, q_hi: float):
    p = flow / q_hi
    for _ in range(4):
        got = q_hi * p
        if got == flow:
            return float(p)
        p = np.nextafter(p, np.inf if got < flow else -np.inf)
    return None


def _balanced_pair(cross: float, q_lo: float, q_hi: float):
    """Up/down probabilities with ``q_lo * up == q_hi * down`` in floating point.

    Not every product ``q_hi * down`` is representable, so the up entry is
    moved by a few ulps until one is.
    """
    up0 = cross / q_lo
    for k in range(16):
        up = up0
        step = np.inf if k % 2 else -np.inf
        for _ in range((k + 1) // 2):
            up = np.nextafter(up, step)
        down = _solve_down(q_lo * up, q_hi)
        if down is not None:
            return float(up), down
    return float(up0), cross / q_hi


def build_fsmc(spec: FadingSpec) -> FadingModel:
    """Construct the tridiagonal block-to-block fading chain."""
    L = int(spec.L)
    lower = np.array(_normalized_partition(L)[0])
    edges = np.append(lower, np.inf)
    q = np.array([state_marginal(edges[i], edges[i + 1]) for i in range(L)])
    snrs = np.array([state_snr(edges[i], edges[i + 1], spec.snr_avg) for i in range(L)])
    # crossings per block of each interior level
    cross = level_crossing_rate(lower, spec.f_D) * spec.t_TB
    P = np.zeros((L, L))
    for i in range(L - 1):
        P[i, i + 1], P[i + 1, i] = _balanced_pair(cross[i + 1], q[i], q[i + 1])
    for i in range(L):
        off = P[i].sum()
        if off > 1.0:
            raise InfeasibleBlockDuration(
                f"state {i + 1}: leaving probability {off:.4g} exceeds 1; "
                f"t_TB is longer than the state can persist", state=i + 1)
        P[i, i] = 1.0 - off
    return FadingModel(spec, lower, q, snrs, P)
