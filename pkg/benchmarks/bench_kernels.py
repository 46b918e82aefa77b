"""Compare the numba and numpy simulator kernels.

Run: python3 benchmarks/bench_kernels.py --packets 1000000 --repeats 3

Both backends get identical inputs; the script checks that the outputs are
equal before reporting timings.  Needs numba enabled (the default).
"""
import argparse
import time

import numpy as np

from nharq import _kernels
from nharq.config import HarqConfig
from nharq.fsmc import FadingSpec, build_fsmc
from nharq.simulate import _hist_next, _nharq_table, _oharq_table, philox_uniforms


def best_of(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n):
    cfg3 = HarqConfig.from_db(-4.0, 50, 100, 3, "IR", (0.3, 0.3), (1.0, 1.0), dispersion="nats")
    t3 = _nharq_table(cfg3, [cfg3.gamma0])
    u = philox_uniforms(0, 1, 0, n)
    chan = np.zeros(n, np.int64)
    yield "nharq_fates m=3 awgn", "nharq_fates", (t3, _hist_next(3), chan, u, 0)

    model = build_fsmc(FadingSpec.from_product(0.0338, 4, 10 ** 1.3))
    cum = np.cumsum(model.transitions, axis=1)
    cum[:, -1] = 1.0
    v = philox_uniforms(0, 2, 0, n)
    yield "fsmc_path L=4", "fsmc_path", (cum, v, 0)

    cfg2 = HarqConfig.from_db(13.0, 180, 100, 2, "IR", (1.0,), (0.5,), dispersion="nats")
    path = _kernels.NUMBA["fsmc_path"](cum, philox_uniforms(0, 2, 0, 2 * n + 1), 0)
    us = philox_uniforms(0, 4, 0, 2 * n + 2)
    yield "oharq_fading m=2 L=4", "oharq_fading", (_oharq_table(cfg2, model.state_snrs), 4, path, us, n)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--packets", type=int, default=1_000_000)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args()
    if not _kernels.NUMBA_ENABLED:
        raise SystemExit("numba is disabled (NHARQ_NUMBA=0); nothing to compare")

    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for label, name, inputs in cases(args.packets):
        nb, np_ = _kernels.NUMBA[name], _kernels.NUMPY[name]
        nb(*inputs)  # compile
        t_nb, out_nb = best_of(lambda: nb(*inputs), args.repeats)
        t_np, out_np = best_of(lambda: np_(*inputs), args.repeats)
        outs_nb = out_nb if isinstance(out_nb, tuple) else (out_nb,)
        outs_np = out_np if isinstance(out_np, tuple) else (out_np,)
        same = all(np.array_equal(a, b) for a, b in zip(outs_nb, outs_np))
        if not same:
            raise SystemExit(f"{label}: backends disagree")
        print(f"{label:<24}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
