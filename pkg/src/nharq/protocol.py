"""Exact packet-level semantics of non-orthogonal HARQ.

Packet ``t`` is first sent in slot ``t``.  A retransmission of packet ``t`` is
superimposed on the head of slot ``t + r`` with power share ``alpha_r`` over a
fraction ``tau_r`` of the slot.  Packets are decoded earliest first.  A
co-scheduled packet stops interfering iff it is eventually decoded, so the
SINRs seen by packet ``t`` depend only on the fates of the ``m - 1`` packets
before it and on the SNR of the slots it occupies.

Fates are coded as integers: ``j < m`` means decoded at transmission
``j + 1`` and ``m`` means failed after ``m`` transmissions.

All attempts of one packet share a single uniform draw ``u``.  The packet is
decoded at the first attempt ``r`` with ``u >= eps_r``, where ``eps_r`` is the
error probability of everything accumulated up to attempt ``r``.
"""

from __future__ import annotations

import itertools
from typing import List, Sequence, Tuple

import numpy as np

from .chain import stationary_solve
from .config import HarqConfig
from .errors import InvalidConfig
from .fbl import segment_error

MIN_FRACTION = 1e-12

Segments = List[Tuple[float, float]]


def _keep(segs):
    return [(g, f) for g, f in segs if f > MIN_FRACTION]


def _first_attempt(cfg: HarqConfig, hist: Sequence[int], g: float) -> Segments:
    m = cfg.m
    if m == 1:
        return [(g, 1.0)]
    fail = m
    if m == 2:
        (a,) = hist
        (al,), (ta,) = cfg.alphas, cfg.taus
        if a == 0:
            return [(g, 1.0)]
        interf = al * g if a == fail else 0.0
        return _keep([((1 - al) * g / (1 + interf), ta), (g, 1 - ta)])
    if m == 3:
        b, a = hist
        a1, a2 = cfg.alphas
        t1, t2 = cfg.taus
        retx2 = b >= 2  # packet t-2 is on its third transmission
        retx1 = a >= 1  # packet t-1 is on its second transmission
        i2 = a2 * (b == fail)
        if retx1 and retx2:
            i_head = i2 + (a1 - a2) * (a == fail)
            return _keep([((1 - a1) * g / (1 + i_head * g), t2),
                          ((1 - a1) * g / (1 + a1 * (a == fail) * g), t1 - t2),
                          (g, 1 - t1)])
        if retx2:
            return _keep([((1 - a2) * g / (1 + i2 * g), t2), (g, 1 - t2)])
        if retx1:
            return _keep([((1 - a1) * g / (1 + a1 * (a == fail) * g), t1), (g, 1 - t1)])
        return [(g, 1.0)]
    raise InvalidConfig(f"packet semantics are implemented for m <= 3, got m={m}")


def _second_attempt(cfg: HarqConfig, hist: Sequence[int], g: float) -> Segments:
    a1 = cfg.alphas[0]
    t1 = cfg.taus[0]
    clean = a1 * g / (1 + (1 - a1) * g)
    if cfg.m == 3 and hist[-1] >= 2:
        # the previous packet's third transmission shares the head of the slot
        a2, t2 = cfg.alphas[1], cfg.taus[1]
        extra = a2 * (hist[-1] == cfg.m)
        return _keep([((a1 - a2) * g / (1 + (1 - a1 + extra) * g), t2), (clean, t1 - t2)])
    return _keep([(clean, t1)])


def _third_attempt(cfg: HarqConfig, g: float) -> Segments:
    a2, t2 = cfg.alphas[1], cfg.taus[1]
    return _keep([(a2 * g / (1 + (1 - a2) * g), t2)])


def attempt_segments(cfg: HarqConfig, hist: Sequence[int], slot_snrs: Sequence[float]) -> List[Segments]:
    """Cumulative segment lists seen at each decoding attempt of one packet.

    ``hist`` holds the fates of the previous ``m - 1`` packets, oldest first.
    ``slot_snrs`` holds the SNR of slots ``t .. t + m - 1``.
    """
    if len(hist) != cfg.m - 1 or len(slot_snrs) != cfg.m:
        raise InvalidConfig("history and slot SNRs do not match m")
    lists = [_first_attempt(cfg, hist, slot_snrs[0])]
    if cfg.m >= 2:
        lists.append(lists[0] + _second_attempt(cfg, hist, slot_snrs[1]))
    if cfg.m >= 3:
        lists.append(lists[1] + _third_attempt(cfg, slot_snrs[2]))
    return lists


def attempt_errors(cfg: HarqConfig, hist, slot_snrs) -> np.ndarray:
    """Error probability after each attempt, made nonincreasing."""
    eps = np.array([segment_error(s, cfg.code, cfg.scheme)
                    for s in attempt_segments(cfg, hist, slot_snrs)])
    return np.minimum.accumulate(eps)


def histories(m: int):
    return list(itertools.product(range(m + 1), repeat=m - 1))


def error_table(cfg: HarqConfig, state_snrs: Sequence[float]) -> np.ndarray:
    """Attempt error probabilities for every history and slot-state tuple.

    The result has shape ``(m + 1,) * (m - 1) + (L,) * m + (m,)`` where ``L``
    is the number of channel states.
    """
    m = cfg.m
    L = len(state_snrs)
    table = np.empty((m + 1,) * (m - 1) + (L,) * m + (m,))
    for hist in histories(m):
        for states in itertools.product(range(L), repeat=m):
            snrs = [state_snrs[s] for s in states]
            table[hist + states] = attempt_errors(cfg, hist, snrs)
    return table


def fate_probabilities(eps: np.ndarray) -> np.ndarray:
    """``[1 - eps_0, eps_0 - eps_1, ..., eps_{m-1}]`` along the last axis."""
    head = 1.0 - eps[..., :1]
    mid = eps[..., :-1] - eps[..., 1:]
    return np.concatenate([head, mid, eps[..., -1:]], axis=-1)


def exact_chain(cfg: HarqConfig, fading=None):
    """Transition matrix and state labels of the exact packet process.

    A state is ``(fates of the last m-1 packets, channel states of the next
    m-1 slots)``.  Without ``fading`` the channel has one state at ``gamma0``.
    """
    m = cfg.m
    if m < 2:
        raise InvalidConfig("the exact chain needs m >= 2")
    if fading is None:
        state_snrs = [cfg.gamma0]
        P = np.ones((1, 1))
    else:
        state_snrs = list(fading.state_snrs)
        P = np.asarray(fading.transitions)
    L = len(state_snrs)
    table = error_table(cfg, state_snrs)
    fates = fate_probabilities(table)
    hists = histories(m)
    chans = list(itertools.product(range(L), repeat=m - 1))
    labels = [(h, c) for h in hists for c in chans]
    index = {lab: i for i, lab in enumerate(labels)}
    M = np.zeros((len(labels), len(labels)))
    for (h, c), row in index.items():
        for nxt in range(L):
            pc = P[c[-1], nxt]
            if pc == 0.0:
                continue
            probs = fates[h + c + (nxt,)]
            for x in range(m + 1):
                h2 = (h + (x,))[1:]
                c2 = (c + (nxt,))[1:]
                M[row, index[(h2, c2)]] += pc * probs[x]
    return M, labels


def exact_occupancy(cfg: HarqConfig, fading=None) -> np.ndarray:
    """Long-run fraction of packets ending in each fate ``0 .. m``."""
    if cfg.m == 1:
        eps = attempt_errors(cfg, (), [cfg.gamma0])
        if fading is not None:
            q = np.asarray(fading.marginals)
            e = np.array([attempt_errors(cfg, (), [g])[0] for g in fading.state_snrs])
            return np.array([1 - q @ e, q @ e])
        return np.array([1 - eps[0], eps[0]])
    M, labels = exact_chain(cfg, fading=fading)
    p = stationary_solve(M, start=0)
    occ = np.zeros(cfg.m + 1)
    for (h, _), pi in zip(labels, p):
        occ[h[-1]] += pi
    return occ
