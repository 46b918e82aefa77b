"""Stationary distributions of finite Markov chains.

The main solver is the Grassmann-Taksar-Heyman (GTH) state reduction.  It
only touches off-diagonal entries and never subtracts, so tiny stationary
probabilities (PERs of 1e-20 and below) keep full relative accuracy.  A
plain linear solve is the fallback for chains where GTH breaks down.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import NegativeProbability, SingularChain

ROW_TOL = 1e-12


def check_stochastic(P, tol: float = 1e-10) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {P.shape}")
    if np.any(P < -ROW_TOL):
        raise NegativeProbability("transition matrix has negative entries")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > tol):
        raise ValueError("transition matrix rows must sum to one")
    return P


def clean_probabilities(p, tol: float = ROW_TOL) -> np.ndarray:
    """Clamp tiny negatives to zero and renormalize; reject larger negatives."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol):
        raise NegativeProbability(f"probability {p.min():.3g} below -{tol:g}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def gth_stationary(P) -> np.ndarray:
    """GTH state reduction; raises SingularChain on a zero pivot."""
    A = np.array(P, dtype=float)
    n = A.shape[0]
    np.fill_diagonal(A, 0.0)
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if not s > 0.0:
            raise SingularChain(f"state {k} cannot reach lower-indexed states")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ A[:k, k]
    return x / x.sum()


def linear_stationary(P) -> np.ndarray:
    """Solve ``(P^T - I) p = 0`` with one equation replaced by ``sum(p) = 1``."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = P.T - np.eye(n)
    if np.linalg.matrix_rank(A) < n - 1:
        raise SingularChain("chain has more than one closed class")
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        p = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularChain(str(exc)) from None
    return clean_probabilities(p)


def stationary_solve(P, start: int = None) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix with one closed class.

    If several closed classes exist, ``start`` picks the one reachable from
    that state; without it the law is not unique and SingularChain is raised.
    """
    P = check_stochastic(P)
    if P.shape[0] == 1:
        return np.ones(1)
    try:
        return gth_stationary(P)
    except SingularChain:
        pass
    closed = closed_class(P, start)
    if closed.size < P.shape[0]:
        p = np.zeros(P.shape[0])
        sub = P[np.ix_(closed, closed)]
        p[closed] = stationary_solve(sub / sub.sum(axis=1, keepdims=True))
        return p
    return linear_stationary(P)


def closed_class(P, start: int = None) -> np.ndarray:
    """Indices of the closed communicating class that carries the stationary law.

    States outside it are transient (or unreachable from ``start``) and carry
    no stationary mass.
    """
    P = np.asarray(P, dtype=float)
    graph = csr_matrix(P > 0)
    n, labels = connected_components(graph, directed=True, connection="strong")
    leaves = [c for c in range(n)
              if not np.any(P[np.ix_(labels == c, labels != c)] > 0)]
    if len(leaves) > 1 and start is not None:
        reach = breadth_first_order(graph, start, directed=True, return_predecessors=False)
        hit = set(labels[reach].tolist())
        leaves = [c for c in leaves if c in hit]
    if len(leaves) != 1:
        raise SingularChain(f"{len(leaves)} closed classes; stationary law is not unique")
    return np.flatnonzero(labels == leaves[0])


def power_stationary(P, tol: float = 1e-14, max_iter: int = 1_000_000) -> np.ndarray:
    """Power iteration on the lazy chain ``(I + P) / 2``; slow but assumption free."""
    P = np.asarray(P, dtype=float)
    lazy = 0.5 * (P + np.eye(P.shape[0]))
    p = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        q = p @ lazy
        if np.abs(q - p).max() < tol:
            return q / q.sum()
        p = q
    return p / p.sum()


def per_m2_closed_form(P) -> float:
    """Closed-form failure-state probability of a 3-state ``{0, 1, e}`` chain.

    Each stationary probability is proportional to the weight of spanning
    trees rooted at that state.  Only off-diagonal entries appear.
    """
    P = check_stochastic(P)
    if P.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    (_, p01, p0e), (p10, _, p1e), (pe0, pe1, _) = P
    w0 = p10 * (pe0 + pe1) + p1e * pe0
    w1 = p01 * (pe0 + pe1) + p0e * pe1
    we = p01 * p1e + p0e * (p10 + p1e)
    total = w0 + w1 + we
    if total == 0.0:
        raise SingularChain("every state is absorbing")
    return we / total
