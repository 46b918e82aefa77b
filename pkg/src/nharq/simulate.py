"""Monte Carlo simulation of the packet stream.

Decoding is drawn from the finite-blocklength error probabilities rather
than from real codes.  The packets are split into a fixed number of
replicas, each an independent trajectory of consecutive packets.  All
randomness comes from counter-based Philox streams keyed by the seed and a
purpose tag, indexed by packet (or slot) number, so results do not depend on
how replicas are scheduled across threads.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .config import HarqConfig
from .delay import DelayProfile
from .errors import ConfigMismatch, InvalidConfig
from .fbl import segment_error
from .fsmc import FadingModel
from .protocol import error_table

MODES = ("nharq", "oharq")
TAG_DECODE = 1
TAG_FADE = 2
TAG_INIT = 3
TAG_SLOT_DECODE = 4
Z95 = 1.959963984540054
BATCH_MIN = 1000


def philox_uniforms(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Uniforms ``start .. start+count-1`` of the stream keyed by (seed, tag)."""
    key = (int(tag) << 64) | (int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
    bitgen = np.random.Philox(key=key, counter=start // 4)
    skip = start % 4
    return np.random.Generator(bitgen).random(count + skip)[skip:]


@dataclass(frozen=True)
class SimConfig:
    cfg: HarqConfig
    channel: Optional[FadingModel] = None
    packets: int = 100_000
    seed: int = 0
    mode: str = "nharq"
    stream_length: int = 1
    replicas: int = 16
    eps_override: Optional[tuple] = None  # fixed attempt error probabilities (AWGN only)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}")
        if self.packets < 1 or self.stream_length < 1 or self.replicas < 1:
            raise InvalidConfig("packets, stream_length and replicas must be positive")
        if self.mode == "nharq" and self.cfg.m > 3:
            raise InvalidConfig("N-HARQ simulation supports m <= 3")
        if self.eps_override is not None and len(self.eps_override) != self.cfg.m:
            raise InvalidConfig(f"eps_override needs {self.cfg.m} values")

    @property
    def block(self) -> int:
        unit = 4 * self.stream_length // math.gcd(4, self.stream_length)
        per = math.ceil(self.packets / self.replicas)
        return unit * math.ceil(per / unit)

    def blocks(self):
        b = self.block
        return [(s, min(b, self.packets - s)) for s in range(0, self.packets, b)]

    def to_dict(self) -> dict:
        d = {"cfg": self.cfg.to_dict(), "packets": self.packets, "seed": self.seed,
             "mode": self.mode, "stream_length": self.stream_length, "replicas": self.replicas}
        if self.channel is not None:
            d["channel"] = self.channel.to_dict()
        if self.eps_override is not None:
            d["eps_override"] = list(self.eps_override)
        return d


@dataclass
class Estimate:
    value: float
    se: float

    @property
    def ci(self):
        return (self.value - Z95 * self.se, self.value + Z95 * self.se)


@dataclass
class SimReport:
    config: dict
    packets: int
    per_hat: Estimate
    occupancy: list
    throughput_hat: float
    delay: DelayProfile
    streams: int
    slots_total: float
    channel_occupancy: Optional[list] = None
    joint_occupancy: Optional[np.ndarray] = None
    joint_se: Optional[np.ndarray] = None
    trace: Optional[dict] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "config": self.config,
            "packets": self.packets,
            "per_hat": {"value": self.per_hat.value, "se": self.per_hat.se, "ci95": list(self.per_hat.ci)},
            "occupancy": [{"value": e.value, "se": e.se, "ci95": list(e.ci)} for e in self.occupancy],
            "throughput_hat": self.throughput_hat,
            "streams": self.streams,
            "slots_total": self.slots_total,
            "delay": [[float(s), float(p)] for s, p in zip(self.delay.support, self.delay.masses)],
        }
        if self.channel_occupancy is not None:
            d["channel_occupancy"] = [{"value": e.value, "se": e.se} for e in self.channel_occupancy]
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def trace_csv(self, path=None) -> str:
        if self.trace is None:
            raise ValueError("simulation was run without keep_trace")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["packet_id", "attempts", "delivered", "delay_slots", "fading_states"])
        tr = self.trace
        for i in range(len(tr["fates"])):
            w.writerow([i, int(tr["attempts"][i]), int(tr["delivered"][i]),
                        f"{tr['delay'][i]:.6g}", tr["states"][i]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# -- error tables -----------------------------------------------------------------


def _oharq_table(cfg: HarqConfig, snrs) -> np.ndarray:
    L = len(snrs)
    m = cfg.m
    lengths = (1.0,) + tuple(cfg.taus)
    table = np.empty((L,) * m + (m,))
    for states in itertools.product(range(L), repeat=m):
        segs = [(snrs[s], f) for s, f in zip(states, lengths)]
        eps = [segment_error(segs[: r + 1], cfg.code, cfg.scheme) for r in range(m)]
        table[states] = np.minimum.accumulate(eps)
    return table.reshape(L ** m, m)


def _nharq_table(cfg: HarqConfig, snrs) -> np.ndarray:
    m = cfg.m
    H = (m + 1) ** (m - 1)
    return error_table(cfg, snrs).reshape(H, len(snrs) ** m, m)


def _hist_next(m: int) -> np.ndarray:
    H = (m + 1) ** (m - 1)
    h = np.arange(H)[:, None]
    x = np.arange(m + 1)[None, :]
    return ((h * (m + 1) + x) % H).astype(np.int64)


# -- one replica --------------------------------------------------------------------


def _fading_path(sim: SimConfig, replica: int, slots: int, backend) -> np.ndarray:
    model = sim.channel
    cum = np.cumsum(model.transitions, axis=1)
    cum[:, -1] = 1.0
    v0 = philox_uniforms(sim.seed, (TAG_INIT << 32) | replica, 0, 1)[0]
    l0 = min(int(np.searchsorted(np.cumsum(model.marginals), v0, side="right")), model.L - 1)
    v = philox_uniforms(sim.seed, (TAG_FADE << 32) | replica, 0, slots - 1)
    return _kernels.get("fsmc_path", backend)(cum, v, l0)


def _attempt_end(fates: np.ndarray, m: int, taus) -> np.ndarray:
    """Time from the start of a packet's first slot to the end of its last transmission."""
    r = np.minimum(fates, m - 1)
    tau_r = np.array((1.0,) + tuple(taus))[r]
    return r + tau_r


def _run_replica(sim: SimConfig, replica: int, start: int, count: int, table, backend):
    cfg = sim.cfg
    m = cfg.m
    u = philox_uniforms(sim.seed, TAG_DECODE, start, count)
    out = {}
    if sim.mode == "nharq":
        L = 1 if sim.channel is None else sim.channel.L
        if L == 1:
            path = np.zeros(count + m - 1, np.int16)
        else:
            path = _fading_path(sim, replica, count + m - 1, backend)
        chan = np.zeros(count, np.int64)
        for j in range(m):
            chan = chan * L + path[j:j + count]
        fates = _kernels.get("nharq_fates", backend)(table, _hist_next(m), chan, u, 0)
        out["slots_used"] = path[:count]
        out["next_state"] = path[1:count + 1] if m >= 2 else path[:count]
        out["path"] = path
        out["starts"] = np.arange(count)
    else:
        if sim.channel is None:
            fates = _kernels._first_success(u, np.broadcast_to(table[0], (count, m)))
            starts = None
            path = None
        else:
            L = sim.channel.L
            slots = count * m + m
            path = _fading_path(sim, replica, slots, backend)
            us = philox_uniforms(sim.seed, (TAG_SLOT_DECODE << 32) | replica, 0, slots)
            fates, starts = _kernels.get("oharq_fading", backend)(table, L, path, us, count)
            out["slots_used"] = path[starts]
        out["starts"] = starts
        out["path"] = path
    out["fates"] = np.asarray(fates, dtype=np.int64)
    return out


# -- aggregation ------------------------------------------------------------------------


def _estimates(indicators_per_replica, n_total):
    """Pooled fraction with a conservative standard error.

    The error is the larger of the Bernoulli error and a batch-means error.
    Batches are consecutive runs of packets inside a replica, long enough
    that serial correlation between batches is negligible.
    """
    sums, sizes = [], []
    for x in indicators_per_replica:
        b = max(BATCH_MIN, math.ceil(x.size / 32))
        for i in range(0, x.size, b):
            chunk = x[i:i + b]
            sums.append(chunk.sum())
            sizes.append(chunk.size)
    sums = np.array(sums, dtype=float)
    sizes = np.array(sizes, dtype=float)
    p = sums.sum() / sizes.sum()
    se_bern = math.sqrt(max(p * (1 - p), 0.0) / n_total)
    nb = sums.size
    se_batch = 0.0
    if nb > 1:
        w = sizes / sizes.sum()
        se_batch = math.sqrt(nb / (nb - 1) * np.sum(w ** 2 * (sums / sizes - p) ** 2))
    return Estimate(float(p), max(se_bern, se_batch))


def simulate(sim: SimConfig, threads: int = 1, keep_trace: bool = False, backend: str = None) -> SimReport:
    cfg = sim.cfg
    m = cfg.m
    snrs = [cfg.gamma0] if sim.channel is None else list(sim.channel.state_snrs)
    if sim.eps_override is not None:
        if sim.channel is not None:
            raise InvalidConfig("eps_override is only supported on AWGN")
        base = np.minimum.accumulate(np.asarray(sim.eps_override, dtype=float))
        H = (m + 1) ** (m - 1) if sim.mode == "nharq" else 1
        table = np.broadcast_to(base, (H, 1, m)).copy() if sim.mode == "nharq" else base[None, :]
    elif sim.mode == "nharq":
        table = _nharq_table(cfg, snrs)
    else:
        table = _oharq_table(cfg, snrs)

    blocks = sim.blocks()
    jobs = [(i, s, c) for i, (s, c) in enumerate(blocks)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(lambda j: _run_replica(sim, j[0], j[1], j[2], table, backend), jobs))
    else:
        runs = [_run_replica(sim, i, s, c, table, backend) for i, s, c in jobs]

    n = sim.packets
    occupancy = [_estimates([r["fates"] == j for r in runs], n) for j in range(m + 1)]
    per = occupancy[m]
    delays = []
    slots_total = 0.0
    lengths = np.cumsum((1.0,) + tuple(cfg.taus))
    N = sim.stream_length
    for r in runs:
        f = r["fates"]
        full = (f.size // N) * N
        if sim.mode == "nharq":
            end = np.arange(f.size) + _attempt_end(f, m, cfg.taus)
            slots_total += float(end.max())
            if full:
                local = end[:full] - np.repeat(np.arange(0, full, N), N)
                delays.append(local.reshape(-1, N).max(axis=1))
        else:
            used = lengths[np.minimum(f, m - 1)]
            slots_total += float(used.sum())
            if full:
                delays.append(used[:full].reshape(-1, N).sum(axis=1))
    delays = np.concatenate(delays) if delays else np.empty(0)
    if delays.size:
        keys, cnt = np.unique(np.round(delays, 6), return_counts=True)
        delay = DelayProfile.from_pairs(zip(keys, cnt / cnt.sum()))
    else:
        delay = DelayProfile(np.empty(0), np.empty(0))

    if sim.mode == "nharq":
        thr = cfg.code.rate * (1.0 - per.value)
    else:
        delivered = sum(int((r["fates"] < m).sum()) for r in runs)
        thr = cfg.code.rate * delivered / slots_total

    chan_occ = joint = joint_se = None
    if sim.channel is not None:
        L = sim.channel.L
        chan_occ = [_estimates([r["slots_used"] == l for r in runs], n) for l in range(L)]
        if sim.mode == "nharq":
            joint_est = [[_estimates([(r["fates"] == j) & (r["next_state"] == l) for r in runs], n)
                          for l in range(L)] for j in range(m + 1)]
            joint = np.array([[e.value for e in row] for row in joint_est])
            joint_se = np.array([[e.se for e in row] for row in joint_est])

    trace = None
    if keep_trace:
        fates = np.concatenate([r["fates"] for r in runs])
        states = []
        for r in runs:
            f = r["fates"]
            for i, x in enumerate(f):
                k = min(int(x), m - 1) + 1
                if r["path"] is None:
                    states.append("")
                else:
                    s = r["starts"][i]
                    states.append(";".join(str(int(v) + 1) for v in r["path"][s:s + k]))
        trace = {"fates": fates, "attempts": np.minimum(fates, m - 1) + 1,
                 "delivered": fates < m,
                 "delay": np.concatenate([_attempt_end(r["fates"], m, cfg.taus) if sim.mode == "nharq"
                                          else lengths[np.minimum(r["fates"], m - 1)] for r in runs]),
                 "states": states}

    return SimReport(sim.to_dict(), n, per, occupancy, thr, delay, int(delays.size), slots_total,
                     chan_occ, joint, joint_se, trace)


# -- comparison -------------------------------------------------------------------------


@dataclass
class Agreement:
    z: dict
    passed: bool
    threshold: float = 3.0

    def worst(self):
        return max(self.z.items(), key=lambda kv: abs(kv[1])) if self.z else (None, 0.0)


def _z(est: Estimate, target: float, n: int) -> float:
    se = max(est.se, math.sqrt(max(target * (1 - target), 0.0) / n))
    if se == 0.0:
        return 0.0 if est.value == target else math.inf
    return (est.value - target) / se


def compare(report: SimReport, analytic, threshold: float = 3.0) -> Agreement:
    """z-scores of simulated statistics against an analytic reference.

    ``analytic`` may be an occupancy vector over fates, an object with a
    ``stationary`` attribute (AWGN or fading chain), or a DelayProfile.
    """
    n = report.packets
    z = {}
    if isinstance(analytic, DelayProfile):
        emp = report.delay.as_dict()
        ref = analytic.as_dict()
        ns = max(report.streams, 1)
        for d in sorted(set(emp) | set(ref)):
            p_hat = emp.get(d, 0.0)
            p = ref.get(d, 0.0)
            est = Estimate(p_hat, math.sqrt(max(p_hat * (1 - p_hat), 0.0) / ns))
            z[f"delay[{d:g}]"] = _z(est, p, ns)
        return Agreement(z, all(abs(v) <= threshold for v in z.values()), threshold)

    joint = None
    channel = None
    if hasattr(analytic, "stationary"):
        st = np.asarray(analytic.stationary)
        if st.ndim == 2:
            joint = st
            occ = st.sum(axis=1)
            if getattr(analytic, "base", None) is not None:
                channel = np.asarray(analytic.base.marginals)
        else:
            occ = st
    else:
        occ = np.asarray(analytic, dtype=float)
    if occ.shape != (len(report.occupancy),):
        raise ConfigMismatch(f"analytic has {occ.size} fate states, simulation has {len(report.occupancy)}")
    for j, (est, p) in enumerate(zip(report.occupancy, occ)):
        z[f"occupancy[{j}]"] = _z(est, float(p), n)
    z["per"] = _z(report.per_hat, float(occ[-1]), n)
    if channel is not None and report.channel_occupancy is not None:
        if channel.size != len(report.channel_occupancy):
            raise ConfigMismatch("fading state counts differ")
        for l, (est, q) in enumerate(zip(report.channel_occupancy, channel)):
            z[f"channel[{l + 1}]"] = _z(est, float(q), n)
    if joint is not None and report.joint_occupancy is not None:
        if joint.shape != report.joint_occupancy.shape:
            raise ConfigMismatch("joint occupancy shapes differ")
        for (j, l), p in np.ndenumerate(joint):
            est = Estimate(float(report.joint_occupancy[j, l]), float(report.joint_se[j, l]))
            z[f"joint[{j},{l + 1}]"] = _z(est, float(p), n)
    return Agreement(z, all(abs(v) <= threshold for v in z.values()), threshold)
