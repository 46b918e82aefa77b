"""Command-line front end.

A scenario is a JSON file (or the name of a bundled recipe) with snake_case
keys.  SNRs are given in dB.  Example::

    {
      "name": "m2_awgn",
      "experiment": "validate",
      "code": {"k": 50, "n": 100, "dispersion": "nats"},
      "harq": {"m": 2, "scheme": "IR", "alphas": [0.35], "taus": [1.0]},
      "channel": {"type": "awgn", "snr_db": -2.0},
      "simulate": {"packets": 1000000}
    }

A file with a top-level ``scenarios`` list is a suite; each entry is merged
over the suite's shared keys and run in turn.

Exit status: 0 on success, 1 on any error, 2 when validation finds |z| > 3.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from importlib import resources

from . import __version__, _accel, awgn, fading, oharq
from .config import HarqConfig
from .errors import NharqError, ParseError
from .fsmc import FadingSpec, build_fsmc, states_for_partition
from .optimize import OptimizationProblem, optimize, surface, sweep, table_csv
from .plotdata import emit_plotdata
from .protocol import exact_occupancy
from .simulate import SimConfig, compare, simulate

log = logging.getLogger("nharq")

EXPERIMENTS = ("sweep", "optimize", "simulate", "validate")
EXIT_OK, EXIT_ERROR, EXIT_VALIDATION = 0, 1, 2


# -- scenario parsing ----------------------------------------------------------


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _field(d: dict, key: str, where: str, kind=None, default=...):
    name = f"{where}.{key}" if where else key
    if not isinstance(d, dict):
        raise ParseError(f"{where or 'scenario'} must be an object", field=where or None)
    if key not in d:
        if default is ...:
            raise ParseError(f"missing field '{name}'", field=name)
        return default
    v = d[key]
    if kind is not None:
        try:
            v = kind(v)
        except (TypeError, ValueError):
            raise ParseError(f"field '{name}' has an invalid value {d[key]!r}", field=name) from None
    return v


def _finite(x: float, name: str) -> float:
    if not math.isfinite(x):
        raise ParseError(f"field '{name}' must be finite", field=name)
    return x


def list_recipes():
    return sorted(p.name[:-5] for p in resources.files("nharq.recipes").iterdir() if p.name.endswith(".json"))


def load_scenario(source: str) -> dict:
    """Parse a scenario file, or a bundled recipe when ``source`` names one."""
    if os.path.exists(source):
        with open(source) as fh:
            text = fh.read()
    elif source in list_recipes():
        text = resources.files("nharq.recipes").joinpath(source + ".json").read_text()
    else:
        raise ParseError(f"no scenario file or recipe named {source!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ParseError("scenario must be a JSON object")
    return data


def expand(data: dict) -> list:
    """Suite entries merged over the shared keys, or the scenario itself."""
    if "scenarios" not in data:
        return [data]
    shared = {k: v for k, v in data.items() if k != "scenarios"}
    entries = data["scenarios"]
    if not isinstance(entries, list) or not entries:
        raise ParseError("field 'scenarios' must be a non-empty list", field="scenarios")
    return [_merge(shared, e) for e in entries]


def build_config(sc: dict, snr_db: float = None) -> HarqConfig:
    code = _field(sc, "code", "")
    harq = _field(sc, "harq", "")
    chan = _field(sc, "channel", "")
    k = _field(code, "k", "code", int)
    n = _field(code, "n", "code", int)
    disp = _field(code, "dispersion", "code", str, "bits")
    m = _field(harq, "m", "harq", int)
    scheme = _field(harq, "scheme", "harq", str, "IR")
    alphas = _field(harq, "alphas", "harq", list, [])
    taus = _field(harq, "taus", "harq", list, [])
    if snr_db is None:
        snr_db = _finite(_field(chan, "snr_db", "channel", float), "channel.snr_db")
    return HarqConfig.from_db(snr_db, k, n, m, scheme, alphas, taus, disp)


def build_channel(sc: dict, snr_db: float = None):
    """FadingModel for a fading channel, None for AWGN."""
    chan = _field(sc, "channel", "")
    kind = _field(chan, "type", "channel", str, "awgn")
    if kind == "awgn":
        return None
    if kind != "fading":
        raise ParseError(f"channel.type must be 'awgn' or 'fading', got {kind!r}", field="channel.type")
    if snr_db is None:
        snr_db = _finite(_field(chan, "snr_db", "channel", float), "channel.snr_db")
    n = _field(_field(sc, "code", ""), "n", "code", int)
    fd_ttb = _field(chan, "fd_ttb", "channel", float)
    L = _field(chan, "L", "channel", int, None)
    if L is None:
        L = states_for_partition(fd_ttb)
    spec = FadingSpec.from_product(fd_ttb, L, 10.0 ** (snr_db / 10.0), n=n)
    return build_fsmc(spec)


def _snr_values(sc: dict, section: dict, where: str):
    vals = _field(section, "snr_db", where, None, None)
    if vals is None:
        return None
    if isinstance(vals, dict):
        start = _field(vals, "start", f"{where}.snr_db", float)
        stop = _field(vals, "stop", f"{where}.snr_db", float)
        step = _field(vals, "step", f"{where}.snr_db", float)
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [_finite(float(v), f"{where}.snr_db") for v in vals]


# -- experiments -----------------------------------------------------------------


class Run:
    """Output bookkeeping for one scenario."""

    def __init__(self, name: str, out_dir: str):
        self.name = name
        self.out_dir = out_dir
        self.outputs = {}
        os.makedirs(out_dir, exist_ok=True)

    def write(self, suffix: str, text: str) -> str:
        fname = f"{self.name}_{suffix}"
        with open(os.path.join(self.out_dir, fname), "w") as fh:
            fh.write(text)
        self.outputs[fname] = hashlib.sha256(text.encode()).hexdigest()
        return fname


def _rows_csv(rows, cols) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _evaluator(chain: str):
    if chain == "exact":
        return lambda c: float(exact_occupancy(c)[-1])
    return None


def run_sweep(sc: dict, run: Run, args) -> int:
    sw = _field(sc, "sweep", "")
    chain = _field(sw, "chain", "sweep", str, "markov")
    if "axes" in sw:
        axes = _field(sw, "axes", "sweep", list)
        values = _field(sw, "values", "sweep", list)
        if len(axes) != 2 or len(values) != 2:
            raise ParseError("a surface needs two axes and two value lists", field="sweep.axes")
        cfg = build_config(sc)
        rows = surface(cfg, tuple(axes), tuple(values), evaluator=_evaluator(chain))
        run.write("surface.csv", emit_plotdata(rows, "per_surface"))
        return EXIT_OK
    axis = _field(sw, "axis", "sweep", str)
    values = _field(sw, "values", "sweep", None)
    if isinstance(values, dict):
        values = _snr_values(sc, {"snr_db": values}, "sweep.values")
    cfg = build_config(sc, snr_db=0.0 if axis == "snr_db" else None)
    model = build_channel(sc, snr_db=0.0 if axis == "snr_db" else None)
    rows = sweep(cfg, axis, [float(v) for v in values], evaluator=_evaluator(chain), model=model)
    run.write("sweep.csv", _rows_csv(rows, ["value", "zeta", "eta", "error"]))
    if axis == "snr_db":
        good = [r for r in rows if not r["error"]]
        run.write("per_vs_snr.csv", emit_plotdata(good, "per_vs_snr"))
        run.write("throughput_vs_snr.csv", emit_plotdata(good, "throughput_vs_snr"))
    return EXIT_OK


def run_optimize(sc: dict, run: Run, args) -> int:
    op = _field(sc, "optimize", "")
    eta0 = _field(op, "eta0", "optimize", float)
    res = _field(op, "resolution", "optimize", float, 0.05)
    snrs = _snr_values(sc, op, "optimize") or [_finite(_field(_field(sc, "channel", ""), "snr_db", "channel", float),
                                                         "channel.snr_db")]
    rows = []
    for s in snrs:
        cfg = build_config(sc, snr_db=s)
        model = build_channel(sc, snr_db=s)
        kind = "fading_m2" if model is not None else f"awgn_m{cfg.m}"
        problem = OptimizationProblem(cfg, eta0, kind, model, resolution=res)
        result = optimize(problem, threads=args.threads)
        log.info("%s: %.2f dB -> zeta=%.3g eta=%.4f", run.name, s, result.zeta, result.eta)
        rows.append({"snr_db": s, **result.row()})
    run.write("optimize.csv", table_csv(rows, cfg.m - 1))
    return EXIT_OK


def _sim_config(sc: dict, seed: int) -> SimConfig:
    sim = _field(sc, "simulate", "", None, {})
    cfg = build_config(sc)
    return SimConfig(cfg, build_channel(sc),
                     packets=_field(sim, "packets", "simulate", int, 100_000),
                     seed=seed,
                     mode=_field(sim, "mode", "simulate", str, "nharq"),
                     stream_length=_field(sim, "stream_length", "simulate", int, 1),
                     replicas=_field(sim, "replicas", "simulate", int, 16))


def _write_sim(run: Run, report) -> None:
    run.write("sim.json", report.to_json() + "\n")
    occ = [{"state": j, "value": e.value, "se": e.se} for j, e in enumerate(report.occupancy)]
    run.write("occupancy.csv", _rows_csv(occ, ["state", "value", "se"]))
    run.write("delay_cdf.csv", emit_plotdata(report.delay, "delay_cdf"))


def run_simulate(sc: dict, run: Run, args) -> int:
    report = simulate(_sim_config(sc, args.seed), threads=args.threads)
    _write_sim(run, report)
    return EXIT_OK


def reference(sim: SimConfig, kind: str):
    """Analytic reference for a simulation: the Markov model or the exact chain."""
    cfg, model = sim.cfg, sim.channel
    if sim.mode == "oharq":
        if model is None:
            return oharq.oharq_split_probs(cfg)
        return oharq.oharq_fading_exact(model, cfg) if kind == "exact" else oharq.oharq_fading_m1(model, cfg)
    if kind == "exact":
        return exact_occupancy(cfg, model)
    if model is not None:
        return fading.solve(cfg, model)
    return awgn.solve(cfg)


def run_validate(sc: dict, run: Run, args) -> int:
    sim = _sim_config(sc, args.seed)
    ref = _field(_field(sc, "validate", "", None, {}), "reference", "validate", str, "markov")
    if ref not in ("markov", "exact"):
        raise ParseError("validate.reference must be 'markov' or 'exact'", field="validate.reference")
    report = simulate(sim, threads=args.threads)
    _write_sim(run, report)
    agreement = compare(report, reference(sim, ref))
    rows = [{"statistic": k, "z": v, "passed": abs(v) <= agreement.threshold} for k, v in agreement.z.items()]
    run.write("validate.csv", _rows_csv(rows, ["statistic", "z", "passed"]))
    name, z = agreement.worst()
    log.info("%s: worst |z| = %.2f (%s)", run.name, abs(z), name)
    return EXIT_OK if agreement.passed else EXIT_VALIDATION


RUNNERS = {"sweep": run_sweep, "optimize": run_optimize, "simulate": run_simulate, "validate": run_validate}


def run_scenario(sc: dict, args, experiment: str = None) -> int:
    name = _field(sc, "name", "", str)
    experiment = experiment or _field(sc, "experiment", "", str)
    if experiment not in EXPERIMENTS:
        raise ParseError(f"experiment must be one of {EXPERIMENTS}", field="experiment")
    run = Run(name, args.out_dir)
    status = RUNNERS[experiment](sc, run, args)
    manifest = {
        "name": name,
        "experiment": experiment,
        "scenario": sc,
        "version": __version__,
        "backend": _accel.backend_name(),
        "seed": args.seed,
        "threads": args.threads,
        "status": status,
        "outputs": run.outputs,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    with open(os.path.join(args.out_dir, f"{name}_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


# -- fsmc inspection ----------------------------------------------------------------


def run_fsmc(args) -> int:
    L = args.L if args.L is not None else states_for_partition(args.fd_ttb)
    spec = FadingSpec.from_product(args.fd_ttb, L, 10.0 ** (args.snr_db / 10.0), n=args.n)
    model = build_fsmc(spec)
    rows = []
    for l in range(L):
        rows.append({"state": l + 1, "eta_lo": float(model.edges[l]), "eta_hi": float(model.edges[l + 1]),
                     "marginal": float(model.marginals[l]),
                     "snr_db": 10.0 * math.log10(model.state_snrs[l]) if model.state_snrs[l] > 0 else -math.inf,
                     "p_down": float(model.transitions[l, l - 1]) if l > 0 else 0.0,
                     "p_stay": float(model.transitions[l, l]),
                     "p_up": float(model.transitions[l, l + 1]) if l < L - 1 else 0.0})
    text = _rows_csv(rows, list(rows[0]))
    os.makedirs(args.out_dir, exist_ok=True)
    name = f"fsmc_L{L}"
    with open(os.path.join(args.out_dir, name + ".csv"), "w") as fh:
        fh.write(text)
    model.to_json(os.path.join(args.out_dir, name + ".json"))
    sys.stdout.write(text)
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; status 2 is reserved for failed validation
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nharq", description=__doc__.split("\n")[0])
    p.add_argument("--seed", type=int, default=0, help="simulation seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker count for grids and replicas")
    p.add_argument("--out-dir", default="out", help="directory for CSV outputs and manifests")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file or bundled recipe")
    r.add_argument("scenario")
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run a scenario as a {name} experiment")
        s.add_argument("scenario")
    f = sub.add_parser("fsmc", help="inspect an equal-duration fading partition")
    f.add_argument("--fd-ttb", type=float, required=True, help="normalized Doppler f_D * t_TB")
    f.add_argument("--L", type=int, default=None, help="number of states (default: from f_D * t_TB)")
    f.add_argument("--snr-db", type=float, default=10.0)
    f.add_argument("--n", type=int, default=100, help="symbols per block")
    sub.add_parser("recipes", help="list bundled recipes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "recipes":
            print("\n".join(list_recipes()))
            return EXIT_OK
        if args.command == "fsmc":
            return run_fsmc(args)
        experiment = None if args.command == "run" else args.command
        status = EXIT_OK
        for sc in expand(load_scenario(args.scenario)):
            status = max(status, run_scenario(sc, args, experiment))
        return status
    except ParseError as exc:
        where = f" (field {exc.field})" if exc.field else ""
        where += f" (line {exc.line})" if exc.line else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_ERROR
    except (NharqError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
