"""Markov-chain analysis of non-orthogonal HARQ over AWGN.

The chain state is the fate of the most recent packet: decoded after
``j + 1`` transmissions (``j = 0 .. m-1``) or failed (``e``).  The fate of the
previous packet fixes which retransmission shares the new packet's slot and
therefore the new packet's entry SINR.

For two retransmissions the rows of the failed states depend on the fate of
an intermediate packet.  That dependence is averaged with the stationary
marginal itself, which turns the stationary equations into a fixed point
solved by damped iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .chain import ROW_TOL, clean_probabilities, stationary_solve
from .config import HarqConfig
from .delay import DelayProfile
from .errors import InvalidConfig, NegativeProbability, NoConvergence
from .fbl import CodeParams, segment_error
from .protocol import MIN_FRACTION

STATES_M2 = ("0", "1", "e")
STATES_M3 = ("0", "1", "2", "e")


@dataclass(frozen=True)
class RetxMarkov:
    states: tuple
    transitions: np.ndarray
    stationary: np.ndarray
    iterations: int = 0

    @property
    def per(self) -> float:
        return float(self.stationary[-1])

    def as_dict(self) -> Dict[str, float]:
        return {s: float(p) for s, p in zip(self.states, self.stationary)}


def _err(pairs, cfg: HarqConfig) -> float:
    segs = [(g, f) for g, f in pairs if f > MIN_FRACTION]
    return segment_error(segs, cfg.code, cfg.scheme)


def _row_from_errors(eps: Sequence[float]) -> np.ndarray:
    """Fate probabilities from nested failure probabilities."""
    eps = list(eps)
    row = np.array([1.0 - eps[0]] + [eps[i] - eps[i + 1] for i in range(len(eps) - 1)] + [eps[-1]])
    if np.any(row < -ROW_TOL):
        raise NegativeProbability(
            f"failure probability grows with an added retransmission: {eps}")
    return np.clip(row, 0.0, None)


# -- one retransmission -------------------------------------------------------


def entry_sinrs_m2(gamma0: float, alpha: float) -> Tuple[float, float, float, float]:
    """Entry SINRs after states 0, 1, e and the SINR of the retransmission."""
    g1 = (1 - alpha) * gamma0
    ge = (1 - alpha) * gamma0 / (1 + alpha * gamma0)
    gi = alpha * gamma0 / (1 + (1 - alpha) * gamma0)
    return gamma0, g1, ge, gi


def m2_row(cfg: HarqConfig, g_entry: float, g_clean: float, g_retx: float) -> np.ndarray:
    tau = cfg.taus[0]
    first = [(g_entry, tau), (g_clean, 1 - tau)]
    return _row_from_errors([_err(first, cfg), _err(first + [(g_retx, tau)], cfg)])


def transition_matrix_m2(cfg: HarqConfig) -> np.ndarray:
    if cfg.m != 2:
        raise InvalidConfig(f"expected m=2, got m={cfg.m}")
    g0, g1, ge, gi = entry_sinrs_m2(cfg.gamma0, cfg.alphas[0])
    return np.vstack([m2_row(cfg, g, g0, gi) for g in (g0, g1, ge)])


def solve_m2(cfg: HarqConfig) -> RetxMarkov:
    P = transition_matrix_m2(cfg)
    # the stream starts with an empty pipeline, i.e. in state 0
    return RetxMarkov(STATES_M2, P, stationary_solve(P, start=0))


# -- two retransmissions ------------------------------------------------------


@dataclass(frozen=True)
class SinrCatalogM3:
    g0: float
    g1: float
    I1: float
    I2: float
    Ib1: float
    Ib2: float
    Ib1a: float
    Eb1: float
    Eb2: float
    Eb1a: float
    Eb2a: float
    E1: float
    tb1: float
    tb2: float
    t12: float

    @classmethod
    def from_config(cls, cfg: HarqConfig) -> "SinrCatalogM3":
        g = cfg.gamma0
        a1, a2 = cfg.alphas
        t1, t2 = cfg.taus
        if a2 > a1 or t2 > t1:
            raise InvalidConfig("need alpha_2 <= alpha_1 and tau_2 <= tau_1")
        return cls(
            g0=g,
            g1=(1 - a1) * g,
            I1=a1 * g / (1 + (1 - a1) * g),
            I2=a2 * g / (1 + (1 - a2) * g),
            Ib1=(1 - a1) * g,
            Ib2=(1 - a2) * g,
            Ib1a=(a1 - a2) * g / (1 + (1 - a1) * g),
            Eb1=(1 - a1) * g / (1 + a1 * g),
            Eb2=(1 - a2) * g / (1 + a2 * g),
            Eb1a=(1 - a1) * g / (1 + (a1 - a2) * g),
            Eb2a=(1 - a1) * g / (1 + a2 * g),
            E1=(a1 - a2) * g / (1 + (1 - (a1 - a2)) * g),
            tb1=1 - t1,
            tb2=1 - t2,
            t12=t1 - t2,
        )


# (SINR names, duration names, number of segments in the first attempt)
_B_LISTS = {
    "2": {
        "0": (("Ib2", "g0", "I1", "I2"), ("t2", "tb2", "t1", "t2"), 2),
        "1": (("Ib1", "g0", "I1", "I2"), ("t1", "tb1", "t1", "t2"), 2),
        "2": (("Ib1", "g0", "Ib1a", "I1", "I2"), ("t1", "tb1", "t2", "t12", "t2"), 2),
        "e": (("Eb1a", "Eb1", "g0", "E1", "I1", "I2"), ("t2", "t12", "tb1", "t2", "t12", "t2"), 3),
    },
    "e": {
        "0": (("Eb2", "g0", "I1", "I2"), ("t2", "tb2", "t1", "t2"), 2),
        "1": (("Eb2a", "Ib1", "g0", "I1", "I2"), ("t2", "t12", "tb1", "t1", "t2"), 3),
        "2": (("Eb2a", "Ib1", "g0", "Ib1a", "I1", "I2"), ("t2", "t12", "tb1", "t2", "t12", "t2"), 3),
        "e": (("Eb1", "g0", "E1", "I1", "I2"), ("t1", "tb1", "t2", "t12", "t2"), 2),
    },
}


def _b_row(cfg: HarqConfig, cat: SinrCatalogM3, entry) -> np.ndarray:
    names, durs, n_first = entry
    t1, t2 = cfg.taus
    lookup = dict(t1=t1, t2=t2, tb1=cat.tb1, tb2=cat.tb2, t12=cat.t12)
    segs = [(getattr(cat, g), lookup[d]) for g, d in zip(names, durs)]
    # the third attempt contributes only the last segment
    return _row_from_errors([_err(segs[:n_first], cfg), _err(segs[:-1], cfg), _err(segs, cfg)])


def m3_row_blocks(cfg: HarqConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed rows for origins 0 and 1, and per-intermediate rows for 2 and e.

    Returns ``(A, B)`` with ``A`` of shape (2, 4) and ``B`` of shape
    (2, 4, 4) indexed by (origin, intermediate state, destination).
    """
    if cfg.m != 3:
        raise InvalidConfig(f"expected m=3, got m={cfg.m}")
    cat = SinrCatalogM3.from_config(cfg)
    t1, t2 = cfg.taus
    A = []
    for gi in (cat.g0, cat.g1):
        first = [(gi, t1), (cat.g0, cat.tb1)]
        A.append(_row_from_errors([
            _err(first, cfg),
            _err(first + [(cat.I1, t1)], cfg),
            _err(first + [(cat.I1, t1), (cat.I2, t2)], cfg),
        ]))
    B = np.array([[_b_row(cfg, cat, _B_LISTS[i][k]) for k in STATES_M3] for i in ("2", "e")])
    return np.array(A), B


def _assemble_m3(A, B, p) -> np.ndarray:
    return np.vstack([A, np.asarray(p) @ B[0], np.asarray(p) @ B[1]])


def transition_matrix_m3(cfg: HarqConfig, p_marginal) -> np.ndarray:
    p = np.asarray(p_marginal, dtype=float)
    if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("p_marginal must be a probability vector over {0, 1, 2, e}")
    A, B = m3_row_blocks(cfg)
    return _assemble_m3(A, B, p)


def _stationary_map(A, B, q) -> np.ndarray:
    return stationary_solve(_assemble_m3(A, B, q / q.sum()), start=0)


def _newton_m3(A, B, p, tol: float = 1e-13, max_iter: int = 100):
    """Newton on ``F(p) = p`` where ``F`` is the stationary law of ``P(p)``.

    Used when the damped iteration crawls.  ``F`` is well scaled even when
    the chain has almost absorbing states, unlike ``p P(p) - p``.  The
    Jacobian is a forward difference with a step relative to each entry.
    Returns None if it does not settle.
    """
    for _ in range(max_iter):
        f = _stationary_map(A, B, p)
        r = f - p
        if np.abs(r).max() <= tol:
            return f
        J = np.empty((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = max(1e-7 * p[j], 1e-30)
            J[:, j] = (_stationary_map(A, B, p + e) - f) / e[j]
        J -= np.eye(4)
        J[-1, :] = 1.0
        r[-1] = 0.0
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(step)):
            return None
        neg = step < 0
        t = 1.0
        if neg.any():
            # stay inside the simplex
            t = min(1.0, 0.999 * float(np.min(p[neg] / -step[neg])))
        p = np.clip(p + t * step, 0.0, None)
        p /= p.sum()
    return None


def _boundary_m3(A, B, p, prev, tol: float = 1e-13):
    """Try the face of the simplex the iteration is drifting towards.

    With almost absorbing states the fixed point can sit on the boundary as
    a double root, which no iteration reaches at a useful rate.  Entries that
    keep shrinking are set to zero and the result is accepted only if it is
    an exact fixed point.
    """
    shrinking = np.flatnonzero((p < prev) & (p < 0.1))
    for idx in [shrinking] + [np.array([j]) for j in shrinking]:
        if idx.size == 0 or idx.size == 4:
            continue
        q = p.copy()
        q[idx] = 0.0
        for _ in range(3):
            q = _stationary_map(A, B, q)
        if np.abs(_stationary_map(A, B, q) - q).max() <= tol:
            return q
    return None


NEWTON_AFTER = 200


def stationary_m3(cfg: HarqConfig, damping: float = 0.5, tol: float = 1e-12,
                  max_iter: int = 10_000) -> RetxMarkov:
    A, B = m3_row_blocks(cfg)
    p = np.full(4, 0.25)
    prev = p
    resid = np.inf
    for it in range(1, max_iter + 1):
        s = stationary_solve(_assemble_m3(A, B, p), start=0)
        new = (1 - damping) * p + damping * s
        resid = np.abs(new - p).max()
        prev, p = p, new
        if resid <= tol:
            break
        if it == NEWTON_AFTER:
            q = _newton_m3(A, B, p)
            if q is None:
                q = _boundary_m3(A, B, p, prev)
            if q is not None:
                p = q
                break
    else:
        raise NoConvergence(f"fixed point did not settle in {max_iter} iterations", residual=resid)
    # polish so that p is exactly the stationary law of its own matrix
    P = _assemble_m3(A, B, p)
    p = clean_probabilities(stationary_solve(P, start=0))
    P = _assemble_m3(A, B, p)
    return RetxMarkov(STATES_M3, P, p, iterations=it)


def solve(cfg: HarqConfig) -> RetxMarkov:
    """Analytic chain for m = 1, 2 or 3."""
    if cfg.m == 1:
        e = _err([(cfg.gamma0, 1.0)], cfg)
        return RetxMarkov(("0", "e"), np.array([[1 - e, e], [1 - e, e]]), np.array([1 - e, e]))
    if cfg.m == 2:
        return solve_m2(cfg)
    if cfg.m == 3:
        return stationary_m3(cfg)
    raise InvalidConfig(f"analytic chains exist for m <= 3, got m={cfg.m}")


# -- derived metrics ----------------------------------------------------------


def throughput(per: float, code: CodeParams) -> float:
    """Delivered bits per channel use."""
    return code.k * (1.0 - per) / code.n


def delay_profile_m2(p0: float, N: int) -> DelayProfile:
    return DelayProfile.from_pairs([(N, p0), (N + 1, 1.0 - p0)])


def delay_profile_m3(p0: float, p1: float, taus: Sequence[float], N: int) -> DelayProfile:
    t1, t2 = taus
    if p0 + p1 > 1.0 + 1e-12:
        raise ValueError("p0 + p1 exceeds one")
    return DelayProfile.from_pairs([(N, p0), (N + t1, p1), (N + 1 + t2, max(0.0, 1.0 - p0 - p1))])
