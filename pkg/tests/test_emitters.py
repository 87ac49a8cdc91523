import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmctwin.emitters import (
    GEV,
    SIV,
    BetaClampWarning,
    Emitter,
    background_to_g2,
    correct_beta,
    coupling_figures,
    extinction_to_coupling,
    g2_model,
    get_species,
    lifetime_limited_linewidth,
    sample_emitters,
    sample_lifetimes,
    sample_strain_coeffs,
    total_linewidth,
    transmission_spectrum,
)

# reference values below were evaluated with mpmath at 30 digits


def test_lifetime_limit_anchor_values():
    assert lifetime_limited_linewidth(6.63) == pytest.approx(24.00527045126626, rel=1e-12)
    assert lifetime_limited_linewidth(4.97) == pytest.approx(32.02312738267512, rel=1e-12)
    assert lifetime_limited_linewidth(1e9) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_lifetime_must_be_positive(tau):
    with pytest.raises(ValueError):
        lifetime_limited_linewidth(tau)


@pytest.mark.parametrize("g0, gd, expected", [(24, 6.5, 37.0), (24, 0, 24.0), (93, 26.5, 146.0)])
def test_total_linewidth(g0, gd, expected):
    assert total_linewidth(g0, gd) == expected


def test_total_linewidth_rejects_negative():
    with pytest.raises(ValueError):
        total_linewidth(24, -1)


def test_extinction_inversion():
    fig = extinction_to_coupling(0.62)
    assert fig.beta_observed == pytest.approx(0.2125992125988189, abs=1e-14)
    assert fig.cooperativity == pytest.approx(0.2700012700019050, abs=1e-14)
    assert fig.extinction == pytest.approx(0.38)
    none = extinction_to_coupling(1.0)
    assert none.beta_observed == 0 and none.cooperativity == 0


@pytest.mark.parametrize("t", [0.0, 1.01, -0.2])
def test_extinction_domain(t):
    with pytest.raises(ValueError):
        extinction_to_coupling(t)


@pytest.mark.parametrize("gamma, expected", [(35, 0.5104166666666667), (37, 0.5395833333333333),
                                             (40, 0.5833333333333334)])
def test_correct_beta_values(gamma, expected):
    assert correct_beta(0.21, gamma, 24, 0.6) == pytest.approx(expected, rel=1e-12)


def test_correct_beta_identity_and_clamp():
    assert correct_beta(0.21, 24, 24, 1.0) == pytest.approx(0.21)
    with pytest.warns(BetaClampWarning):
        assert correct_beta(0.5, 146, 24, 0.6) == 1.0
    with pytest.raises(ValueError):
        correct_beta(0.21, 20, 24, 0.6)


def test_coupling_figures_records_clamp():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ok = coupling_figures(0.62, 37, 24, 0.6)
    assert not ok.beta_clamped and ok.beta_dipole == pytest.approx(0.21259921 * 37 / 24 / 0.6)
    assert coupling_figures(0.1, 146, 24, 0.6).beta_clamped


def test_g2_model():
    assert g2_model(0.0, 0.06, 5.0) == pytest.approx(0.06)
    assert g2_model(1e6, 0.06, 5.0) == pytest.approx(1.0)
    assert g2_model(5.0, 0.06, 5.0) == pytest.approx(0.6541933252988442, rel=1e-12)
    with pytest.raises(ValueError):
        g2_model(0.0, 0.06, 0.0)


def test_background_to_g2():
    assert background_to_g2(18.0) == pytest.approx(0.030959912618951072, rel=1e-12)
    assert background_to_g2(0.0) == pytest.approx(0.75)
    assert background_to_g2(math.inf) == 0.0
    with pytest.raises(ValueError):
        background_to_g2(math.nan)


def test_transmission_spectrum_oracle():
    # pick lifetime and dephasing so that beta_eff = 0.213 exactly
    e = Emitter(GEV, lifetime_ns=6.63, dephasing_mhz=0.0, beta_ideal=0.213)
    t = transmission_spectrum(e, [0.0, e.gamma_mhz / 2, 1e9])
    assert t[0] == pytest.approx(0.619369, abs=1e-12)
    # |1 - 0.213 / (1 + i)|^2
    assert t[1] == pytest.approx(0.8096845, abs=1e-12)
    assert t[2] == pytest.approx(1.0, abs=1e-12)


def test_beta_eff_dilution():
    e = Emitter(GEV, lifetime_ns=6.63, dephasing_mhz=6.5, beta_ideal=0.8)
    assert e.beta_eff == pytest.approx(0.8 * e.gamma0_mhz / e.gamma_mhz)


@given(st.floats(0.01, 1.0), st.floats(1.0, 200.0), st.floats(0.0, 0.99))
def test_transmission_is_lorentzian_dip(beta, gamma, x):
    # T(delta) = 1 - (2b - b^2) / (1 + u^2) with u = 2 delta / Gamma
    gd = 0.0
    tau = 1000 / (2 * math.pi * gamma)
    e = Emitter(GEV, lifetime_ns=tau, dephasing_mhz=gd, beta_ideal=beta)
    delta = x * 3 * gamma
    u = 2 * delta / e.gamma_mhz
    expected = 1 - (2 * beta - beta**2) / (1 + u * u)
    t = transmission_spectrum(e, [delta, -delta])
    assert t[0] == pytest.approx(expected, abs=1e-12)
    assert t[0] == pytest.approx(t[1], abs=1e-12)
    assert 0 <= t[0] <= 1 + 1e-12


@given(st.floats(1e-3, 0.999))
def test_extinction_round_trip(beta):
    fig = extinction_to_coupling((1 - beta) ** 2)
    assert fig.beta_observed == pytest.approx(beta, abs=1e-12)
    assert fig.cooperativity == pytest.approx(beta / (1 - beta), rel=1e-9)


@given(st.floats(0.0, 40.0), st.floats(0.0, 40.0))
def test_background_g2_monotone(a, b):
    lo, hi = sorted((a, b))
    assert background_to_g2(hi) <= background_to_g2(lo)


def test_species_table_and_overrides():
    assert GEV.gamma0_mean_mhz == 32 and SIV.gamma0_mean_mhz == 93
    assert GEV.lifetime_ns == pytest.approx(4.973591971621729)
    s = get_species("GeV", inhom_spread_ghz=88.0)
    assert s.inhom_spread_ghz == 88.0 and GEV.inhom_spread_ghz == 85.0
    with pytest.raises((KeyError, ValueError)):
        get_species("NV")


def test_samplers_are_seeded_and_physical():
    a = sample_emitters(GEV, 50, np.random.default_rng(3))
    b = sample_emitters(GEV, 50, np.random.default_rng(3))
    assert a == b
    assert all(e.lifetime_ns > 0 and e.dephasing_mhz >= 0 for e in a)
    tau = sample_lifetimes(GEV, 100_000, np.random.default_rng(1))
    assert tau.mean() == pytest.approx(GEV.lifetime_ns, rel=0.002)
    assert tau.std() / tau.mean() == pytest.approx(0.10, rel=0.02)
    k = np.abs(sample_strain_coeffs(100_000, np.random.default_rng(2)))
    assert k.min() >= 0.01666 / math.sqrt(10) and k.max() <= 0.01666 * math.sqrt(10)
    assert np.exp(np.log(k).mean()) == pytest.approx(0.01666, rel=0.01)


def test_population_matches_gamma_means():
    em = sample_emitters(GEV, 50_000, np.random.default_rng(7))
    assert np.mean([e.gamma_mhz for e in em]) == pytest.approx(54, rel=0.02)
    em = sample_emitters(SIV, 50_000, np.random.default_rng(7))
    assert np.mean([e.gamma_mhz for e in em]) == pytest.approx(146, rel=0.02)
