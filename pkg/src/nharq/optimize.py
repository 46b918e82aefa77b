"""PER minimization under a throughput floor.

The search is derivative free: a grid over the ordered parameter region,
followed by a pattern search around the best grid point with a step that is
halved a fixed number of times.  The objective has plateaus and several
local minima, so the grid is what makes the result trustworthy; the pattern
search only polishes it.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import awgn, fading
from .config import HarqConfig
from .errors import EvaluatorFailure, InvalidConfig, NharqError
from .fsmc import FadingModel

CHAIN_KINDS = ("awgn_m2", "awgn_m3", "fading_m2")


@dataclass(frozen=True)
class Point:
    alphas: tuple
    taus: tuple
    zeta: float
    eta: float

    def key(self, eta0: float):
        """Sort key: feasible first, then PER, larger throughput, shorter tau_1, smaller alpha_1."""
        feasible = self.eta >= eta0 - 1e-9
        return (not feasible, self.zeta, -self.eta, self.taus[0], self.alphas[0])


@dataclass(frozen=True)
class OptimizationProblem:
    template: HarqConfig
    eta0: float
    chain_kind: str
    model: Optional[FadingModel] = None
    resolution: float = 0.05
    shrinks: int = 8

    def __post_init__(self):
        if self.chain_kind not in CHAIN_KINDS:
            raise InvalidConfig(f"chain_kind must be one of {CHAIN_KINDS}")
        if not 1e-3 <= self.resolution <= 0.25:
            raise InvalidConfig("grid resolution must lie in [1e-3, 0.25]")
        if not self.eta0 > 0:
            raise InvalidConfig("eta0 must be positive")
        m = {"awgn_m2": 2, "awgn_m3": 3, "fading_m2": 2}[self.chain_kind]
        if self.template.m != m:
            raise InvalidConfig(f"{self.chain_kind} needs m={m}")
        if self.chain_kind == "fading_m2" and self.model is None:
            raise InvalidConfig("fading_m2 needs a fading model")


@dataclass
class OptimizationResult:
    alpha_hat: tuple
    tau_hat: tuple
    zeta: float
    eta: float
    feasible: bool
    best_grid: Point = None
    trace: List[Point] = field(default_factory=list)

    def row(self) -> dict:
        d = {f"alpha_hat_{i + 1}": a for i, a in enumerate(self.alpha_hat)}
        d.update({f"tau_hat_{i + 1}": t for i, t in enumerate(self.tau_hat)})
        d.update(zeta=self.zeta, eta=self.eta, feasible=self.feasible)
        return d


def evaluate(problem: OptimizationProblem, alphas, taus) -> Point:
    """PER and throughput of one parameter point."""
    cfg = problem.template.with_params(alphas, taus)
    try:
        if problem.chain_kind == "awgn_m2":
            zeta = awgn.solve_m2(cfg).per
        elif problem.chain_kind == "awgn_m3":
            zeta = awgn.stationary_m3(cfg).per
        else:
            zeta = fading.solve(cfg, problem.model).per
    except NharqError as exc:
        raise EvaluatorFailure(f"evaluation failed at alphas={alphas}, taus={taus}: {exc}",
                               point=(tuple(alphas), tuple(taus))) from exc
    return Point(cfg.alphas, cfg.taus, zeta, awgn.throughput(zeta, cfg.code))


def _axis(lo: float, res: float) -> np.ndarray:
    n = int(round((1.0 - lo) / res))
    vals = 1.0 - res * np.arange(n + 1)
    return np.round(vals[vals >= lo - 1e-12], 10)[::-1]


def _ordered(r: int, axis: np.ndarray):
    """Nonincreasing ``r``-tuples drawn from ``axis``."""
    for combo in itertools.combinations_with_replacement(axis[::-1], r):
        yield tuple(float(x) for x in combo)


def grid_points(problem: OptimizationProblem) -> List[Tuple[tuple, tuple]]:
    r = problem.template.m - 1
    res = problem.resolution
    alphas = list(_ordered(r, _axis(0.0, res)))
    if problem.template.scheme == "CC":
        taus = [(1.0,) * r]
    else:
        taus = list(_ordered(r, _axis(res, res)))
    return [(a, t) for a in alphas for t in taus]


def _eval_chunk(args):
    problem, chunk = args
    return [evaluate(problem, a, t) for a, t in chunk]


def _evaluate_many(problem, points, threads: int) -> List[Point]:
    if threads <= 1 or len(points) < 64:
        return [evaluate(problem, a, t) for a, t in points]
    size = math.ceil(len(points) / (4 * threads))
    chunks = [points[i:i + size] for i in range(0, len(points), size)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_eval_chunk, [(problem, c) for c in chunks]))
    return [p for part in parts for p in part]


def _valid(alphas, taus) -> bool:
    if any(not 0.0 <= a <= 1.0 for a in alphas) or any(not 0.0 < t <= 1.0 for t in taus):
        return False
    return all(alphas[i] <= alphas[i - 1] for i in range(1, len(alphas))) and \
        all(taus[i] <= taus[i - 1] for i in range(1, len(taus)))


def _pattern_search(problem, start: Point, trace: List[Point]) -> Point:
    eta0 = problem.eta0
    free_tau = problem.template.scheme != "CC"
    r = problem.template.m - 1
    coords = [("a", i) for i in range(r)] + ([("t", i) for i in range(r)] if free_tau else [])
    best = start
    step = problem.resolution / 2
    seen = {(best.alphas, best.taus)}
    for _ in range(problem.shrinks):
        improved = True
        while improved:
            improved = False
            for kind, i in coords:
                for sign in (1.0, -1.0):
                    a, t = list(best.alphas), list(best.taus)
                    vec = a if kind == "a" else t
                    vec[i] = round(min(1.0, vec[i] + sign * step), 12)
                    a, t = tuple(a), tuple(t)
                    if not _valid(a, t) or (a, t) in seen:
                        continue
                    seen.add((a, t))
                    cand = evaluate(problem, a, t)
                    trace.append(cand)
                    if cand.key(eta0) < best.key(eta0):
                        best, improved = cand, True
        step /= 2
    return best


def optimize(problem: OptimizationProblem, threads: int = 1) -> OptimizationResult:
    trace = _evaluate_many(problem, grid_points(problem), threads)
    eta0 = problem.eta0
    grid_best = min(trace, key=lambda p: p.key(eta0))
    feasible = grid_best.eta >= eta0 - 1e-9
    best = _pattern_search(problem, grid_best, trace) if feasible else grid_best
    if not feasible:
        best = min(trace, key=lambda p: (p.zeta, -p.eta))
    return OptimizationResult(best.alphas, best.taus, best.zeta, best.eta,
                              best.eta >= eta0 - 1e-9, grid_best, trace)


# -- sweeps ---------------------------------------------------------------------


SWEEP_AXES = ("snr_db", "alpha_1", "alpha_2", "tau_1", "tau_2")


def _apply(cfg: HarqConfig, axis: str, value: float) -> HarqConfig:
    if axis == "snr_db":
        return cfg.with_gamma0(10.0 ** (value / 10.0))
    kind, idx = axis.split("_")
    i = int(idx) - 1
    vec = list(cfg.alphas if kind == "alpha" else cfg.taus)
    vec[i] = value
    # keep the ordering by dragging later entries along
    for j in range(i + 1, len(vec)):
        vec[j] = min(vec[j], value)
    return cfg.with_params(alphas=vec) if kind == "alpha" else cfg.with_params(taus=vec)


def sweep(template: HarqConfig, axis: str, values: Sequence[float],
          evaluator: Callable[[HarqConfig], float] = None, model: FadingModel = None) -> List[dict]:
    """Evaluate PER and throughput along one axis.

    A failing row is recorded with its error message and the sweep goes on.
    """
    if axis not in SWEEP_AXES:
        raise InvalidConfig(f"axis must be one of {SWEEP_AXES}")
    if evaluator is None:
        if model is not None:
            def evaluator(c):
                m = model
                if axis == "snr_db":
                    from .fsmc import build_fsmc
                    m = build_fsmc(replace(model.spec, snr_avg=c.gamma0))
                return fading.solve(c, m).per
        else:
            def evaluator(c):
                return awgn.solve(c).per
    rows = []
    for v in sorted(values):
        row = {"value": float(v)}
        try:
            cfg = _apply(template, axis, float(v))
            zeta = evaluator(cfg)
            row.update(zeta=zeta, eta=awgn.throughput(zeta, cfg.code), error="")
        except (NharqError, ValueError) as exc:
            row.update(zeta=math.nan, eta=math.nan, error=str(exc))
        rows.append(row)
    return rows


def surface(template: HarqConfig, axes: Tuple[str, str], values: Tuple[Sequence[float], Sequence[float]],
            evaluator: Callable[[HarqConfig], float] = None) -> List[dict]:
    """Evaluate a two-parameter grid without enforcing the ordering constraint.

    Points that violate it are skipped unless ``evaluator`` accepts them.
    """
    evaluator = evaluator or (lambda c: awgn.solve(c).per)
    rows = []
    for x in values[0]:
        for y in values[1]:
            vecs = {"alpha": list(template.alphas), "tau": list(template.taus)}
            for ax, v in ((axes[0], x), (axes[1], y)):
                kind, idx = ax.split("_")
                vecs[kind][int(idx) - 1] = float(v)
            try:
                cfg = template.with_params(vecs["alpha"], vecs["tau"])
                zeta = evaluator(cfg)
            except (NharqError, ValueError):
                continue
            rows.append({"x": float(x), "y": float(y), "zeta": zeta,
                         "eta": awgn.throughput(zeta, cfg.code)})
    return rows


def table_csv(rows: Sequence[dict], r: int, path=None) -> str:
    """Table-I style CSV: snr_db, alpha_hat..., tau_hat..., zeta, eta, feasible."""
    cols = ["snr_db"] + [f"alpha_hat_{i + 1}" for i in range(r)] + \
        [f"tau_hat_{i + 1}" for i in range(r)] + ["zeta", "eta", "feasible"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
