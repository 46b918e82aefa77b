import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nharq import oharq
from nharq.config import HarqConfig
from nharq.delay import DelayProfile
from nharq.errors import InvalidConfig
from nharq.fbl import CodeParams, epsilon_cc, epsilon_ir
from nharq.fsmc import FadingSpec, build_fsmc
from nharq.simulate import SimConfig, compare, simulate


def cfg(snr_db=0.0, taus=(1.0,), k=70, n=100, scheme="IR", disp="nats"):
    m = len(taus) + 1
    return HarqConfig.from_db(snr_db, k, n, m, scheme, (1.0,) * (m - 1), taus, dispersion=disp)


def fsmc(snr_db=13.0, L=4):
    return build_fsmc(FadingSpec.from_product(0.0338, L, 10 ** (snr_db / 10)))


# -- split probabilities

def test_splits_extremes():
    np.testing.assert_allclose(oharq.oharq_split_probs(cfg(300.0, (0.5, 0.5))), [1, 0, 0, 0], atol=1e-15)
    c = HarqConfig(CodeParams(70, 100), 3, 0.0, "IR", (1.0, 1.0), (0.5, 0.5))
    np.testing.assert_allclose(oharq.oharq_split_probs(c), [0, 0, 0, 1], atol=1e-15)


def test_splits_ir_formula():
    c = cfg(-1.0, (0.6, 0.2))
    g = c.gamma0
    e = [epsilon_ir([(g, 1.0)], c.code),
         epsilon_ir([(g, 1.0), (g, 0.6)], c.code),
         epsilon_ir([(g, 1.0), (g, 0.6), (g, 0.2)], c.code)]
    np.testing.assert_allclose(oharq.oharq_split_probs(c), [1 - e[0], e[0] - e[1], e[1] - e[2], e[2]], rtol=1e-12)


def test_splits_cc_accumulate():
    c = cfg(-3.0, (1.0, 1.0), scheme="CC")
    g = c.gamma0
    e = [epsilon_cc([g] * j, c.code) for j in (1, 2, 3)]
    np.testing.assert_allclose(oharq.oharq_split_probs(c), [1 - e[0], e[0] - e[1], e[1] - e[2], e[2]], rtol=1e-12)


@given(st.floats(-10, 10), st.lists(st.floats(0.05, 1), min_size=1, max_size=4),
       st.integers(10, 150), st.sampled_from(["IR", "CC"]), st.sampled_from(["bits", "nats"]))
def test_splits_sum_to_one(snr, taus, k, scheme, disp):
    p = oharq.oharq_split_probs(cfg(snr, tuple(sorted(taus, reverse=True)), k=k, scheme=scheme, disp=disp))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12


# -- throughput

def test_throughput_examples():
    code = CodeParams(70, 100)
    assert oharq.oharq_throughput([1, 0, 0], [1.0], code) == pytest.approx(0.7)
    assert oharq.oharq_throughput([0, 0, 1], [1.0], code) == 0.0
    assert oharq.oharq_throughput([0.5, 0.5, 0], [1.0], code) == pytest.approx(0.7 / 1.5)
    with pytest.raises(InvalidConfig):
        oharq.oharq_throughput([1, 0], [1.0], code)


def test_throughput_tradeoff_in_tau():
    # short retransmissions cost little when they are rarely needed
    rows = []
    for t in np.arange(0.1, 1.01, 0.1):
        c = cfg(0.0, (t,))
        s = oharq.oharq_split_probs(c)
        rows.append((s[-1], oharq.oharq_throughput(s, c.taus, c.code)))
    pers = [r[0] for r in rows]
    assert all(b <= a for a, b in zip(pers, pers[1:]))
    assert 0 < max(r[1] for r in rows) < 0.7


# -- delay

def test_delay_single_examples():
    assert oharq.oharq_delay_single([1, 0, 0], [1.0]).as_dict() == {1: 1.0}
    assert oharq.oharq_delay_single([0.5, 0, 0.5], [1.0]).as_dict() == {1: 0.5, 2: 0.5}
    d = oharq.oharq_delay_single([0.7, 0.2, 0.05, 0.05], [0.6, 0.2]).as_dict()
    assert d == pytest.approx({1: 0.7, 1.6: 0.2, 1.8: 0.1})


def test_delay_stream_examples():
    single = oharq.oharq_delay_single([0.5, 0, 0.5], [1.0])
    assert oharq.oharq_delay_stream(single, 1).as_dict() == single.as_dict()
    assert oharq.oharq_delay_stream(single, 2).as_dict() == pytest.approx({2: 0.25, 3: 0.5, 4: 0.25})


def test_delay_stream_brute_force():
    single = oharq.oharq_delay_single([0.6, 0.25, 0.1, 0.05], [0.5, 0.3])
    ref = {}
    for combo in itertools.product(zip(single.support, single.masses), repeat=3):
        d = round(sum(x[0] for x in combo), 6)
        ref[d] = ref.get(d, 0.0) + np.prod([x[1] for x in combo])
    assert oharq.oharq_delay_stream(single, 3).as_dict() == pytest.approx(ref, rel=1e-12)


@given(st.floats(0, 1), st.floats(0.05, 1).map(lambda t: round(t, 4)), st.integers(1, 64))
def test_stream_matches_binomial(eps, tau, N):
    single = oharq.oharq_delay_single([1 - eps, eps, 0.0], [tau])
    stream = oharq.oharq_delay_stream(single, N).as_dict()
    closed = {d: p for d, p in oharq.oharq_binomial_m1(1 - eps, tau, N).as_dict().items() if p >= 1e-15}
    assert set(stream) <= set(oharq.oharq_binomial_m1(1 - eps, tau, N).as_dict())
    for d, p in closed.items():
        assert stream.get(d, 0.0) == pytest.approx(p, abs=1e-12)


def test_stream_mass_and_mean():
    single = oharq.oharq_delay_single([0.9, 0.07, 0.02, 0.01], [0.35, 0.2])
    for N in (1, 10, 100, 10_000):
        s = oharq.oharq_delay_stream(single, N)
        assert abs(s.total - 1) <= 1e-9
        assert s.mean() == pytest.approx(N * single.mean(), rel=1e-9)


# -- fading, one retransmission

def test_fading_single_state_is_awgn():
    mdl = fsmc(3.0, L=1)
    c = cfg(3.0, (0.4,), k=150)
    ref = oharq.oharq_split_probs(c.with_gamma0(float(mdl.state_snrs[0])))
    np.testing.assert_allclose(oharq.oharq_fading_m1(mdl, c), ref, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(oharq.oharq_fading_exact(mdl, c), ref, rtol=1e-12, atol=1e-15)


def test_fading_high_snr():
    c = cfg(90.0, (0.2,))
    np.testing.assert_allclose(oharq.oharq_fading_m1(fsmc(90.0), c), [1, 0, 0], atol=1e-12)


def test_fading_sums_to_one():
    for snr in (0.0, 8.0, 13.0):
        for k in (100, 150, 180):
            s = oharq.oharq_fading_m1(fsmc(snr), cfg(snr, (0.2,), k=k))
            assert abs(s.sum() - 1) <= 1e-12 and np.all(s >= 0)


def test_fading_rejects_two_retransmissions():
    with pytest.raises(InvalidConfig):
        oharq.oharq_fading_m1(fsmc(), cfg(13.0, (0.5, 0.5)))


def test_analyse():
    c = cfg(0.0, (0.5,))
    r = oharq.analyse(c)
    assert r["per"] == r["splits"][-1]
    assert r["throughput"] == oharq.oharq_throughput(r["splits"], c.taus, c.code)


@pytest.mark.slow
def test_fading_matches_monte_carlo():
    mdl = fsmc()
    c = cfg(13.0, (0.2,), k=150)
    rep = simulate(SimConfig(c, mdl, packets=1_000_000, seed=5, mode="oharq"))
    assert compare(rep, oharq.oharq_fading_m1(mdl, c)).passed


@pytest.mark.slow
def test_fading_stream_view_matches_monte_carlo():
    mdl = fsmc()
    c = cfg(13.0, (0.5,), k=180)
    rep = simulate(SimConfig(c, mdl, packets=1_000_000, seed=5, mode="oharq"))
    assert compare(rep, oharq.oharq_fading_exact(mdl, c)).passed
