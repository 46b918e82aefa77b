"""Hot loops of the Monte Carlo simulator.

Each loop exists twice: a sequential version compiled with numba and a
vectorized numpy version.  Both return identical results for identical
inputs.  The numpy versions turn the sequential recursions into prefix
compositions of per-step maps over a small state space (Hillis-Steele scan),
so they run in ``O(n log n)`` vectorized work.
"""

from __future__ import annotations

import numpy as np

from ._accel import NUMBA_ENABLED, njit


# -- numba ---------------------------------------------------------------------


@njit(nogil=True)
def _nharq_fates_nb(eps, hist_next, chan, u, h0):
    n = u.shape[0]
    m = eps.shape[2]
    out = np.empty(n, np.int8)
    h = h0
    for t in range(n):
        c = chan[t]
        x = m
        for r in range(m):
            if u[t] >= eps[h, c, r]:
                x = r
                break
        out[t] = x
        h = hist_next[h, x]
    return out


@njit(nogil=True)
def _fsmc_path_nb(cum, v, l0):
    n = v.shape[0]
    L = cum.shape[0]
    path = np.empty(n + 1, np.int16)
    path[0] = l0
    s = l0
    for t in range(n):
        k = 0
        while k < L - 1 and v[t] >= cum[s, k]:
            k += 1
        s = k
        path[t + 1] = s
    return path


@njit(nogil=True)
def _oharq_fading_nb(eps, L, path, u, n):
    # u is indexed by the slot in which a packet starts
    m = eps.shape[1]
    fates = np.empty(n, np.int8)
    starts = np.empty(n, np.int64)
    s = 0
    for t in range(n):
        c = 0
        for j in range(m):
            c = c * L + path[s + j]
        x = m
        for r in range(m):
            if u[s] >= eps[c, r]:
                x = r
                break
        fates[t] = x
        starts[t] = s
        s += min(x, m - 1) + 1
    return fates, starts


# -- numpy -----------------------------------------------------------------------


def _scan_maps(maps: np.ndarray) -> np.ndarray:
    """Inclusive prefix composition: row ``t`` becomes ``f_t o ... o f_0``."""
    M = maps.copy()
    n = M.shape[0]
    d = 1
    while d < n:
        M[d:] = np.take_along_axis(M[d:], M[:-d], axis=1)
        d *= 2
    return M


def _first_success(u, eps):
    """Index of the first attempt with ``u >= eps``; ``m`` if none."""
    ok = u[..., None] >= eps
    m = eps.shape[-1]
    return np.where(ok.any(axis=-1), ok.argmax(axis=-1), m).astype(np.int8)


def _nharq_fates_np(eps, hist_next, chan, u, h0):
    n = u.shape[0]
    if n == 0:
        return np.empty(0, np.int8)
    E = np.transpose(eps[:, chan, :], (1, 0, 2))  # (n, H, m)
    X = _first_success(u[:, None], E)  # (n, H)
    H = eps.shape[0]
    maps = hist_next[np.arange(H)[None, :], X].astype(np.int16)
    C = _scan_maps(maps)
    states = np.empty(n, np.int64)
    states[0] = h0
    states[1:] = C[:-1, h0]
    return X[np.arange(n), states]


def _fsmc_path_np(cum, v, l0):
    L = cum.shape[0]
    n = v.shape[0]
    path = np.empty(n + 1, np.int16)
    path[0] = l0
    if n == 0:
        return path
    maps = np.empty((n, L), np.int16)
    for s in range(L):
        maps[:, s] = np.minimum(np.searchsorted(cum[s], v, side="right"), L - 1)
    C = _scan_maps(maps)
    path[1:] = C[:, l0]
    return path


def _oharq_fading_np(eps, L, path, u, n):
    # the next start depends only on the current start, so the start
    # positions are iterates of one map; compute them by pointer doubling
    m = eps.shape[1]
    S = path.shape[0] - m + 1
    c = np.zeros(S, np.int64)
    for j in range(m):
        c = c * L + path[j:j + S]
    X = _first_success(u[:S], eps[c])
    nxt = np.empty(S + 1, np.int64)
    nxt[:S] = np.minimum(np.arange(S) + np.minimum(X, m - 1) + 1, S)
    nxt[S] = S
    pos = np.zeros(n, np.int64)
    idx = np.arange(n)
    k = 0
    while (1 << k) < n:
        sel = ((idx >> k) & 1).astype(bool)
        pos[sel] = nxt[pos[sel]]
        nxt = nxt[nxt]
        k += 1
    return X[pos], pos


NUMPY = {"nharq_fates": _nharq_fates_np, "fsmc_path": _fsmc_path_np, "oharq_fading": _oharq_fading_np}
NUMBA = {"nharq_fates": _nharq_fates_nb, "fsmc_path": _fsmc_path_nb, "oharq_fading": _oharq_fading_nb}


def get(name: str, backend: str = None):
    """Kernel ``name`` for ``backend`` ("numba" or "numpy"; default follows the env flag)."""
    if backend is None:
        backend = "numba" if NUMBA_ENABLED else "numpy"
    if backend == "numba" and not NUMBA_ENABLED:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    return (NUMBA if backend == "numba" else NUMPY)[name]
