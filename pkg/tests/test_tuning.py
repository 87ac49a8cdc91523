import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from qmctwin import oracles
from qmctwin.emitters import GEV, SIV, STRAIN_COEFF_CENTER, Emitter
from qmctwin.rng import substream
from qmctwin.tuning import (
    ActuatorConfig,
    NoCrossing,
    TuningPlan,
    crossing_voltage,
    empirical_fwhm,
    max_mutually_resonant_set,
    max_resonant_pairs,
    pair_coverage,
    reachable_interval,
    sample_inhomogeneous,
    stab_max,
    strained_frequency,
    write_plan_csv,
)

ACT = ActuatorConfig()


def em(f, k):
    return Emitter(GEV, zpl_offset_ghz=f, strain_coeff_ghz_per_v2=k)


def test_strained_frequency_anchors():
    assert strained_frequency(3.0, 0.01666, 0.0, 100) == 3.0
    assert strained_frequency(0.0, 0.016660, 24.5, 100) == pytest.approx(10.0, abs=1e-3)
    assert strained_frequency(0.0, 0.4, 25.0, 100) == 100.0
    assert strained_frequency(0.0, -0.4, 25.0, 100) == -100.0
    with pytest.raises(ValueError):
        strained_frequency(0.0, 0.1, -1.0, 100)


def test_crossing_voltage_anchor():
    v = crossing_voltage(em(0.0, 0.01666), em(10.0, 0.0), ACT)
    assert v == pytest.approx(24.49979, abs=1e-5)
    assert abs(24.5 - v) <= 0.01
    gap = strained_frequency(0.0, 0.01666, v, ACT.cap_ghz) - strained_frequency(10.0, 0.0, v, ACT.cap_ghz)
    assert abs(gap) <= 1e-9


@pytest.mark.parametrize("a, b, act, reason", [
    (em(0, 0.01), em(5, 0.01), ACT, "parallel"),
    (em(0, -0.01), em(5, 0.01), ACT, "diverging"),
    (em(0, 0.001), em(50, 0.0), ActuatorConfig(v_max=100), "beyond_vmax"),
    (em(0, 0.02), em(150, 0.0), ActuatorConfig(v_max=100, cap_ghz=100), "capped"),
])
def test_no_crossing_reasons(a, b, act, reason):
    with pytest.raises(NoCrossing) as info:
        crossing_voltage(a, b, act)
    assert info.value.reason == reason


def test_equal_frequencies_cross_at_zero():
    assert crossing_voltage(em(4.0, 0.01), em(4.0, -0.02), ACT) == 0.0


def test_reachable_interval():
    assert reachable_interval(em(2.0, 0.0), ACT) == (2.0, 2.0)
    assert reachable_interval(em(2.0, 0.05), ACT) == (2.0, 102.0)
    assert reachable_interval(em(2.0, -0.05), ACT) == (-98.0, 2.0)
    lo, hi = reachable_interval(em(0.0, 0.0167), ActuatorConfig(v_max=50, cap_ghz=100))
    assert hi - lo == pytest.approx(41.75)


def test_stab_trivial_cases():
    assert stab_max([(0, 1), (2, 3), (4, 5)])[1] == 1
    assert stab_max([(0, 5), (1, 6), (2, 3)]) == (2, 3)
    # closed intervals touching at a point share it
    assert stab_max([(0, 1), (1, 2)]) == (1, 2)


def test_matching_trivial_cases():
    apart = [em(100.0 * i, 0.0) for i in range(5)]
    assert max_resonant_pairs(apart, ACT) == []
    same = [em(0.0, 0.01) for _ in range(7)]
    assert len(max_resonant_pairs(same, ACT)) == 3
    plan = max_mutually_resonant_set(same, ACT)
    assert plan.size == 7


def test_optimizers_match_exhaustive_oracles():
    rng = substream(2024, "oracle-test")
    for _ in range(1000):
        emitters, act = oracles.random_instance(rng)
        iv = [reachable_interval(e, act) for e in emitters]
        x_ref, n_ref = oracles.brute_force_stab(iv)
        plan = max_mutually_resonant_set(emitters, act)
        assert (plan.target_freq_ghz, plan.size) == (x_ref, n_ref)
        plan.verify(emitters, act)
        m = oracles.brute_force_matching_size(len(emitters), oracles.interval_edges(emitters, act))
        pairs = max_resonant_pairs(emitters, act)
        assert len(pairs) == m
        used = [i for p in pairs for i in p]
        assert len(used) == len(set(used))


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-0.05, 0.05)), min_size=1, max_size=12))
def test_plan_is_realisable(params):
    emitters = [em(f, k) for f, k in params]
    plan = max_mutually_resonant_set(emitters, ACT)
    plan.verify(emitters, ACT)
    for i, v in plan.members:
        assert 0 <= v <= ACT.v_max


@settings(max_examples=40)
@given(st.floats(-40, 40), st.floats(0.001, 0.05), st.floats(-40, 40), st.floats(-0.05, 0.05))
def test_crossing_symmetric(f1, k1, f2, k2):
    a, b = em(f1, k1), em(f2, k2)
    try:
        v = crossing_voltage(a, b, ACT)
    except NoCrossing as exc:
        with pytest.raises(NoCrossing) as other:
            crossing_voltage(b, a, ACT)
        assert other.value.reason == exc.reason
        return
    assert crossing_voltage(b, a, ACT) == pytest.approx(v)


def test_plan_verify_rejects_bad_plan():
    emitters = [em(0.0, 0.01), em(50.0, 0.0)]
    with pytest.raises(AssertionError):
        TuningPlan(50.0, ((0, 10.0), (1, 0.0))).verify(emitters, ACT)


def test_inhomogeneous_fwhm():
    assert empirical_fwhm(sample_inhomogeneous(GEV, 100_000, 1)) == pytest.approx(85, abs=2)
    assert empirical_fwhm(sample_inhomogeneous(SIV, 100_000, 1)) == pytest.approx(30, abs=1)
    assert np.isfinite(sample_inhomogeneous(GEV, 1, 1)).all()


def coverage_quadrature(species, act, order=200):
    """P(two random reachable intervals overlap), integrating over log |k| and signs.

    Gauss-Legendre in each log-magnitude, split where the tuning cap starts to bind.
    """
    sd = math.sqrt(2) * species.inhom_spread_ghz / (2 * math.sqrt(2 * math.log(2)))
    h = 0.5 * math.log(10.0)
    knot = math.log(act.cap_ghz / (STRAIN_COEFF_CENTER * act.v_max**2))
    edges = [-h] + ([knot] if -h < knot < h else []) + [h]
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges, edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    u, wu = np.concatenate(nodes), np.concatenate(weights) / (2 * h)
    mag = np.minimum(STRAIN_COEFF_CENTER * np.exp(u) * act.v_max**2, act.cap_ghz)

    total = 0.0
    for si in (-1, 1):
        for sj in (-1, 1):
            a, b = si * mag[:, None], sj * mag[None, :]
            lo_i, hi_i = np.minimum(0, a), np.maximum(0, a)
            lo_j, hi_j = np.minimum(0, b), np.maximum(0, b)
            p = norm.cdf((hi_i - lo_j) / sd) - norm.cdf((lo_i - hi_j) / sd)
            total += 0.25 * float(wu @ p @ wu)
    return total


def test_pair_coverage_matches_quadrature():
    p, se = pair_coverage(GEV, ACT, 400_000, 8, workers=2)
    assert abs(p - coverage_quadrature(GEV, ACT)) <= 0.01
    assert se < 0.001


def test_pair_coverage_limits():
    assert pair_coverage(GEV, ActuatorConfig(cap_ghz=0.0), 50_000, 1)[0] == 0.0
    # with unlimited travel only pairs whose lines move apart (one sign in four) stay unmatched
    big, se = pair_coverage(SIV, ActuatorConfig(v_max=1000, cap_ghz=1e6), 50_000, 1)
    assert abs(big - 0.75) <= 4 * se


def test_pair_coverage_worker_invariance():
    assert pair_coverage(GEV, ACT, 200_000, 3, 1) == pair_coverage(GEV, ACT, 200_000, 3, 4)


def test_actuator_validation():
    with pytest.raises(ValueError):
        ActuatorConfig(v_max=0)
    with pytest.raises(ValueError):
        ActuatorConfig(cap_ghz=-1)


def test_plan_csv(tmp_path):
    emitters = [em(0.0, 0.01666), em(10.0, 0.0), em(300.0, 0.0)]
    plan = max_mutually_resonant_set(emitters, ACT)
    path = tmp_path / "plan.csv"
    write_plan_csv(plan, emitters, path, ids=[4, 5, 6])
    lines = path.read_text().splitlines()
    assert lines[0] == "emitter_id,f0_ghz,k,voltage,f_target_ghz"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["4", "5"]
