import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from nharq.chain import stationary_solve
from nharq.errors import InfeasibleBlockDuration, InvalidInterval, ParseError
from nharq.fsmc import (PARTITION_C, FadingModel, FadingSpec, build_fsmc, equal_duration_partition,
                        level_crossing_rate, state_duration, state_marginal, state_snr,
                        states_for_partition)


def durations(model):
    e = model.edges
    N = level_crossing_rate(e)
    return model.marginals / (N[:-1] + N[1:])


# -- level crossings, marginals, state SNRs

def test_lcr_values():
    assert level_crossing_rate(0.0, 210) == 0.0
    assert level_crossing_rate(math.inf, 210) == 0.0
    assert level_crossing_rate(30.0, 210) < 1e-300
    assert level_crossing_rate(1.0, 210) == pytest.approx(193.65, abs=0.01)


def test_marginal_values():
    assert state_marginal(0.0, math.inf) == 1.0
    assert state_marginal(0.0, math.sqrt(math.log(2))) == pytest.approx(0.5, abs=1e-15)
    assert state_marginal(0.5, 1.0) == pytest.approx(0.41092, abs=1e-5)


def test_marginal_matches_quadrature():
    for lo, hi in ((0.0, 0.3), (0.5, 1.0), (1.2, 2.5)):
        ref, _ = quad(lambda x: 2 * x * math.exp(-x * x), lo, hi, epsabs=1e-14)
        assert state_marginal(lo, hi) == pytest.approx(ref, rel=1e-12)


def test_marginal_bad_interval():
    with pytest.raises(InvalidInterval):
        state_marginal(1.0, 1.0)
    with pytest.raises(InvalidInterval):
        state_snr(-0.1, 1.0, 1.0)


def test_state_snr_values():
    assert state_snr(0.0, math.inf, 7.5) == pytest.approx(7.5, rel=1e-15)
    assert state_snr(0.0, math.inf, 1.0) == pytest.approx(1.0, rel=1e-15)
    assert state_snr(1.0, math.inf, 1.0) == pytest.approx(2.0, rel=1e-15)


def test_state_snr_matches_quadrature():
    # conditional mean of the squared envelope
    lo, hi = 0.4, 1.3
    num, _ = quad(lambda x: x * x * 2 * x * math.exp(-x * x), lo, hi)
    assert state_snr(lo, hi, 3.0) == pytest.approx(3.0 * num / state_marginal(lo, hi), rel=1e-10)


# -- partition

def spec(L, fd_ttb=0.0338, snr_db=10.0):
    return FadingSpec.from_product(fd_ttb, L, 10 ** (snr_db / 10))


def test_partition_one_state():
    assert equal_duration_partition(spec(1)) == []
    m = build_fsmc(spec(1))
    assert m.marginals.tolist() == [1.0]
    assert m.transitions.tolist() == [[1.0]]


def test_partition_two_states_is_median():
    (eta,) = equal_duration_partition(spec(2))
    assert eta == pytest.approx(math.sqrt(math.log(2)), rel=1e-12)


def bisect_partition(L):
    # independent oracle: nested bisection with mpmath at high precision
    mpmath.mp.dps = 30

    def N(x):
        return mpmath.sqrt(2 * mpmath.pi) * x * mpmath.exp(-x * x)

    def D(a, b):
        return (mpmath.exp(-a * a) - mpmath.exp(-b * b)) / (N(a) + N(b))

    def chain(T):
        th = [mpmath.mpf(0)]
        for _ in range(L - 1):
            a = th[-1]
            lo, hi = a, a + 8
            if D(a, hi) < T:
                return None
            for _ in range(120):
                mid = (lo + hi) / 2
                if D(a, mid) < T:
                    lo = mid
                else:
                    hi = mid
            th.append(hi)
        return th

    lo, hi = mpmath.mpf("1e-6"), mpmath.mpf(2)
    for _ in range(120):
        T = (lo + hi) / 2
        th = chain(T)
        if th is None or mpmath.exp(-th[-1] ** 2) / N(th[-1]) < T:
            hi = T
        else:
            lo = T
    return [float(x) for x in chain(lo)[1:]]


@pytest.mark.parametrize("L", [3, 4, 6])
def test_partition_matches_bisection_oracle(L):
    assert equal_duration_partition(spec(L)) == pytest.approx(bisect_partition(L), rel=1e-9)


@pytest.mark.parametrize("L", [2, 4, 8, 13, 20])
def test_partition_equal_durations(L):
    d = durations(build_fsmc(spec(L, fd_ttb=1e-4)))
    assert np.ptp(d) / d.mean() <= 1e-9
    assert d.mean() == pytest.approx(state_duration(L), rel=1e-12)


def test_partition_thresholds_increasing():
    m = build_fsmc(spec(10))
    assert np.all(np.diff(m.thresholds) > 0)
    assert np.all(np.diff(m.state_snrs) > 0)


# -- chain construction

def test_static_channel_limit():
    m = build_fsmc(spec(6, fd_ttb=1e-12))
    assert np.allclose(m.transitions, np.eye(6), atol=1e-10)


def test_reference_operating_points_build():
    m = build_fsmc(FadingSpec(f_D=210.0, t_TB=0.14e-3, B=100 / 0.14e-3, snr_avg=10.0, L=13))
    assert m.spec.fd_ttb == pytest.approx(0.0294)
    for fd_ttb in (0.0338, 0.04):
        L = states_for_partition(fd_ttb)
        model = build_fsmc(spec(L, fd_ttb))
        assert model.c == pytest.approx(PARTITION_C, rel=0.15)
    assert states_for_partition(0.0338) == 15
    assert states_for_partition(0.04) == 11
    for L, fd_ttb in ((13, 0.0338), (4, 0.04)):
        build_fsmc(spec(L, fd_ttb))


def test_infeasible_block_duration():
    with pytest.raises(InfeasibleBlockDuration) as info:
        build_fsmc(spec(8, fd_ttb=0.5))
    assert info.value.state is not None


@given(st.integers(1, 24), st.floats(1e-5, 0.05))
def test_fsmc_structure(L, fd_ttb):
    try:
        m = build_fsmc(spec(L, fd_ttb))
    except InfeasibleBlockDuration:
        return
    P = m.transitions
    assert abs(m.marginals.sum() - 1) <= 1e-12
    assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)
    assert np.all(P >= 0)
    i, j = np.indices(P.shape)
    assert np.all(P[np.abs(i - j) > 1] == 0)
    # detailed balance holds exactly, not just to rounding
    for l in range(L - 1):
        assert m.marginals[l] * P[l, l + 1] == m.marginals[l + 1] * P[l + 1, l]
    assert stationary_solve(P) == pytest.approx(m.marginals, abs=1e-9)


# -- serialization

def test_json_round_trip(tmp_path):
    m = build_fsmc(spec(5, snr_db=13.0))
    path = tmp_path / "model.json"
    m.to_json(str(path))
    back = FadingModel.from_json(str(path))
    assert back.transitions == pytest.approx(m.transitions, abs=0)
    assert back.state_snrs == pytest.approx(m.state_snrs, rel=1e-12)
    d = json.loads(m.to_json())
    assert set(d) == {"f_D", "t_TB", "B", "snr_avg_db", "L", "thresholds", "marginals",
                      "state_snrs_db", "transitions"}


def test_json_missing_field():
    d = build_fsmc(spec(3)).to_dict()
    del d["marginals"]
    with pytest.raises(ParseError) as info:
        FadingModel.from_dict(d)
    assert info.value.field == "marginals"


def test_spec_validation():
    with pytest.raises(ValueError):
        FadingSpec(f_D=0.0, t_TB=1e-3, B=1e5, snr_avg=1.0, L=2)
    with pytest.raises(ValueError):
        FadingSpec(f_D=10.0, t_TB=1e-3, B=1e5, snr_avg=1.0, L=0)
