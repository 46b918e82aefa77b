"""Non-orthogonal HARQ with one retransmission over a finite-state fading chain.

The chain state pairs the fate ``J`` of the latest packet with the fading
state of the block that follows it.  States are ordered J-major, fading-minor:
index ``J * L + l``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .awgn import STATES_M2, entry_sinrs_m2, m2_row, throughput
from .chain import check_stochastic, clean_probabilities, stationary_solve
from .config import HarqConfig
from .delay import DelayProfile
from .errors import InvalidConfig, SingularChain
from .fsmc import FadingModel


@dataclass(frozen=True)
class FadingRetxMarkov:
    base: FadingModel
    transitions: np.ndarray
    stationary: np.ndarray  # shape (3, L)

    @property
    def aggregates(self) -> np.ndarray:
        return self.stationary.sum(axis=1)

    @property
    def per(self) -> float:
        return float(self.aggregates[-1])

    def throughput(self, code) -> float:
        return throughput(self.per, code)

    def delay_profile(self, N: int) -> DelayProfile:
        from .awgn import delay_profile_m2

        return delay_profile_m2(float(self.aggregates[0]), N)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "probability"])
        L = self.stationary.shape[1]
        for j, J in enumerate(STATES_M2):
            for l in range(L):
                w.writerow([f"{J},{l + 1}", repr(float(self.stationary[j, l]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def build_fading_chain(cfg: HarqConfig, model: FadingModel) -> np.ndarray:
    if cfg.m != 2:
        raise InvalidConfig(f"the fading chain covers m=2, got m={cfg.m}")
    L = model.L
    G = model.state_snrs
    P = model.transitions
    alpha = cfg.alphas[0]
    M = np.zeros((3 * L, 3 * L))
    for l in range(L):
        entries = entry_sinrs_m2(G[l], alpha)[:3]
        for k in range(L):
            if P[l, k] == 0.0:
                continue
            gi = entry_sinrs_m2(G[k], alpha)[3]
            for i, g_entry in enumerate(entries):
                row = m2_row(cfg, g_entry, G[l], gi)
                M[i * L + l, np.arange(3) * L + k] = P[l, k] * row
    return M


def _constrained_stationary(M: np.ndarray, marginals: np.ndarray) -> np.ndarray:
    """Least-squares stationary law pinned to known fading marginals."""
    n = M.shape[0]
    L = marginals.size
    A = np.vstack([M.T - np.eye(n), np.tile(np.eye(L), (1, n // L))])
    b = np.concatenate([np.zeros(n), marginals])
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    return clean_probabilities(p)


def solve_fading_chain(transitions, marginals=None, base: FadingModel = None) -> FadingRetxMarkov:
    """Stationary law of the expanded chain.

    If the chain is reducible (for instance a frozen channel) the fading
    marginals pick out the relevant stationary law; pass ``marginals`` or
    ``base`` in that case.
    """
    M = check_stochastic(transitions, tol=1e-10)
    if base is not None and marginals is None:
        marginals = base.marginals
    try:
        p = stationary_solve(M)
    except SingularChain:
        if marginals is None:
            raise
        p = _constrained_stationary(M, np.asarray(marginals, dtype=float))
    L = M.shape[0] // 3
    return FadingRetxMarkov(base, M, p.reshape(3, L))


def solve(cfg: HarqConfig, model: FadingModel) -> FadingRetxMarkov:
    return solve_fading_chain(build_fading_chain(cfg, model), base=model)
