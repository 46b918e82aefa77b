"""Finite-blocklength error probabilities (normal approximation).

Two entry points share one kernel:

* :func:`epsilon_ir` -- incremental redundancy over parallel AWGN segments,
  each segment contributing ``n_i`` symbols at SINR ``gamma_i``.
* :func:`epsilon_cc` -- Chase combining, i.e. a single segment of ``n``
  symbols at the MRC-accumulated SNR.

The channel dispersion comes in two conventions selected by
``CodeParams.dispersion``:

``"bits"``
    ``V = (1 - (1+g)^-2) * log2(e)^2`` -- consistent with rates in bits.
``"nats"``
    ``V = 1 - (1+g)^-2`` -- the unscaled dispersion.  The bundled
    recipes select it explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import erfc

from ._accel import njit
from .errors import EmptySegments, InvalidCode

LOG2E = math.log2(math.e)
DISPERSION_SCALE = {"bits": LOG2E * LOG2E, "nats": 1.0}

SegmentPairs = Sequence[tuple]


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)``; accepts arrays."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def dispersion(gamma, convention: str = "bits"):
    """Channel dispersion of a real AWGN channel at linear SNR ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    v = (1.0 - (1.0 + g) ** -2) * DISPERSION_SCALE[convention]
    return float(v) if np.ndim(v) == 0 else v


def symbol_count(fraction: float, base_n: int) -> int:
    """Round ``fraction * base_n`` half away from zero, with a floor of one."""
    return max(1, int(math.floor(fraction * base_n + 0.5)))


@dataclass(frozen=True)
class CodeParams:
    k: int
    n: int
    dispersion: str = "bits"

    def __post_init__(self):
        if self.k <= 0 or self.n <= 0:
            raise InvalidCode(f"k and n must be positive, got k={self.k}, n={self.n}")
        if self.k > 20 * self.n:
            raise InvalidCode(f"k={self.k} exceeds 20 bits per symbol over n={self.n}")
        if self.dispersion not in DISPERSION_SCALE:
            raise InvalidCode(f"unknown dispersion convention {self.dispersion!r}")

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def vscale(self) -> float:
        return DISPERSION_SCALE[self.dispersion]


@dataclass(frozen=True)
class SinrSegmentList:
    """Ordered (SINR, blocklength fraction) pairs seen by one codeword."""

    segments: tuple
    base_n: int

    def __post_init__(self):
        segs = tuple((float(g), float(f)) for g, f in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.base_n < 1:
            raise ValueError("base_n must be a positive integer")
        for g, f in segs:
            if not g >= 0.0:
                raise ValueError(f"SINR must be nonnegative, got {g}")
            if not f > 0.0:
                raise ValueError(f"blocklength fraction must be positive, got {f}")

    def __len__(self):
        return len(self.segments)

    def gammas(self) -> np.ndarray:
        return np.array([g for g, _ in self.segments], dtype=float)

    def symbol_counts(self) -> np.ndarray:
        return np.array([symbol_count(f, self.base_n) for _, f in self.segments], dtype=np.int64)


@njit
def _eps_kernel(gammas, counts, k, vscale):
    num = 0.0
    var = 0.0
    total = 0
    for i in range(gammas.shape[0]):
        g = gammas[i]
        c = counts[i]
        total += c
        num += c * math.log2(1.0 + g)
        var += c * (1.0 - 1.0 / ((1.0 + g) * (1.0 + g))) * vscale
    if var <= 0.0:
        # zero mutual information everywhere
        return 1.0 if k > 0 else 0.0
    x = (num - k + math.log2(total)) / math.sqrt(var)
    p = 0.5 * math.erfc(x / math.sqrt(2.0))
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


def _as_segment_list(segments, code: CodeParams) -> SinrSegmentList:
    if isinstance(segments, SinrSegmentList):
        return segments
    return SinrSegmentList(tuple(segments), code.n)


def epsilon_ir(segments: Union[SinrSegmentList, SegmentPairs], code: CodeParams) -> float:
    """Error probability of an IR codeword spread over parallel AWGN segments.

    ``segments`` is a :class:`SinrSegmentList` or a plain sequence of
    ``(gamma, fraction)`` pairs measured against ``code.n``.
    """
    if not isinstance(code, CodeParams):
        raise InvalidCode("code must be a CodeParams instance")
    seg = _as_segment_list(segments, code)
    if len(seg) == 0:
        raise EmptySegments("epsilon_ir needs at least one segment")
    return float(_eps_kernel(seg.gammas(), seg.symbol_counts(), float(code.k), code.vscale))


def epsilon_cc(gammas: Iterable[float], code: CodeParams) -> float:
    """Error probability after maximum-ratio combining of full-length copies."""
    gs = [float(g) for g in gammas]
    if not gs:
        raise EmptySegments("epsilon_cc needs at least one SNR")
    if any(not g >= 0.0 for g in gs):
        raise ValueError("SNRs must be nonnegative")
    return epsilon_ir([(math.fsum(gs), 1.0)], code)


def segment_error(pairs: SegmentPairs, code: CodeParams, scheme: str = "IR") -> float:
    """Dispatch on the combining scheme.

    For IR the pairs are parallel segments.  For CC every pair is a full-length
    copy and the SNRs add; fractions are ignored.
    """
    if scheme == "IR":
        return epsilon_ir(pairs, code)
    if scheme == "CC":
        return epsilon_cc([g for g, _ in pairs], code)
    raise ValueError(f"unknown scheme {scheme!r}")
