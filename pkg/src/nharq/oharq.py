"""Orthogonal HARQ baseline: every retransmission occupies its own slot.

Split probabilities are indexed by the number of retransmissions used:
``[p_0, p_1, ..., p_r, p_e]`` where ``r = len(taus)``.  The first
transmission always has length one slot.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import binom

from .awgn import _err, _row_from_errors
from .config import HarqConfig
from .delay import DelayProfile, convolve_power
from .errors import InvalidConfig
from .fbl import CodeParams
from .fsmc import FadingModel


def _cumulative_lists(gamma: float, taus: Sequence[float]):
    segs = [(gamma, 1.0)] + [(gamma, t) for t in taus]
    return [segs[: i + 1] for i in range(len(segs))]


def oharq_split_probs(cfg: HarqConfig) -> np.ndarray:
    """Probabilities of success after exactly ``i`` retransmissions, then failure."""
    eps = [_err(s, cfg) for s in _cumulative_lists(cfg.gamma0, cfg.taus)]
    return _row_from_errors(np.minimum.accumulate(eps))


def _check_splits(splits, taus):
    splits = np.asarray(splits, dtype=float)
    if splits.shape != (len(taus) + 2,):
        raise InvalidConfig(f"{len(taus)} retransmissions need {len(taus) + 2} split probabilities")
    return splits


def oharq_throughput(splits, taus: Sequence[float], code: CodeParams) -> float:
    splits = _check_splits(splits, taus)
    cum = np.cumsum([1.0] + list(taus))
    slots = splits[:-1] @ cum + splits[-1] * cum[-1]
    return code.rate * (1.0 - splits[-1]) / slots


def oharq_delay_single(splits, taus: Sequence[float]) -> DelayProfile:
    splits = _check_splits(splits, taus)
    cum = np.cumsum([1.0] + list(taus))
    pairs = list(zip(cum, splits[:-1])) + [(cum[-1], splits[-1])]
    return DelayProfile.from_pairs(pairs)


def oharq_delay_stream(single: DelayProfile, N: int) -> DelayProfile:
    return convolve_power(single, N)


def oharq_binomial_m1(p0: float, tau1: float, N: int) -> DelayProfile:
    """Closed form for one retransmission: ``i`` first-shot successes out of ``N``."""
    i = np.arange(N + 1)
    mass = binom.pmf(i, N, p0)
    pairs = zip((1 + tau1) * N - i * tau1, mass)
    return DelayProfile.from_pairs(pairs, drop_zero=False)


def oharq_fading_m1(model: FadingModel, cfg: HarqConfig) -> np.ndarray:
    """Split probabilities with one retransmission over the fading chain.

    The retransmission sees the channel one block later.
    """
    if cfg.m != 2:
        raise InvalidConfig("the fading baseline covers a single retransmission (m=2)")
    tau = cfg.taus[0]
    G = model.state_snrs
    q = model.marginals
    P = model.transitions
    L = model.L
    e1 = np.array([_err([(G[l], 1.0)], cfg) for l in range(L)])
    e2 = np.zeros((L, L))
    for l in range(L):
        for k in range(L):
            if P[l, k] > 0:
                e2[l, k] = min(e1[l], _err([(G[l], 1.0), (G[k], tau)], cfg))
    w = q[:, None] * P
    p0 = float(q @ (1 - e1))
    pe = float(np.sum(w * e2))
    p1 = float(np.sum(w * (e1[:, None] - e2)))
    return np.array([p0, p1, pe])


def analyse(cfg: HarqConfig, model: FadingModel = None) -> dict:
    splits = oharq_split_probs(cfg) if model is None else oharq_fading_m1(model, cfg)
    return {"splits": splits, "per": float(splits[-1]),
            "throughput": oharq_throughput(splits, cfg.taus, cfg.code)}


def oharq_fading_exact(model: FadingModel, cfg: HarqConfig) -> np.ndarray:
    """Split probabilities seen by consecutive packets of one stream.

    The channel state at a packet's first slot follows a Markov chain of its
    own: a packet that needs the retransmission moves the channel two blocks
    instead of one.  Weighting by that chain rather than by the fading
    marginals gives what a simulated stream actually observes.
    """
    from .chain import stationary_solve

    if cfg.m != 2:
        raise InvalidConfig("the fading baseline covers a single retransmission (m=2)")
    tau = cfg.taus[0]
    G = model.state_snrs
    P = model.transitions
    L = model.L
    e1 = np.array([_err([(G[l], 1.0)], cfg) for l in range(L)])
    e2 = np.array([[min(e1[l], _err([(G[l], 1.0), (G[k], tau)], cfg)) if P[l, k] > 0 else 0.0
                    for k in range(L)] for l in range(L)])
    T = (1 - e1)[:, None] * P + e1[:, None] * (P @ P)
    s = stationary_solve(T)
    w = s[:, None] * P
    p0 = float(s @ (1 - e1))
    pe = float(np.sum(w * e2))
    return np.array([p0, 1.0 - p0 - pe, pe])
