"""Colour-centre photophysics and waveguide-QED coupling figures.

Units: linewidths in MHz, ZPL offsets in GHz, times in ns, lengths in nm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# centre of the strain-response distribution: closes a 10 GHz gap at 24.5 V
STRAIN_COEFF_CENTER = 0.01666
STRAIN_COEFF_DECADES = 1.0
LIFETIME_REL_SPREAD = 0.10


class BetaClampWarning(UserWarning):
    """Corrected coupling efficiency exceeded unity and was clamped."""


@dataclass(frozen=True)
class SpeciesParams:
    name: str
    zpl_wavelength_nm: float
    gamma0_mean_mhz: float
    gamma_mean_mhz: float
    debye_waller: float
    inhom_spread_ghz: float
    implant_depth_nm: float
    straggle_nm: float
    lateral_fwhm_nm: float

    def __post_init__(self):
        if self.name not in ("GeV", "SiV"):
            raise ValueError(f"unknown species {self.name!r}")
        for attr in ("zpl_wavelength_nm", "gamma0_mean_mhz", "inhom_spread_ghz",
                     "implant_depth_nm", "straggle_nm", "lateral_fwhm_nm"):
            if not getattr(self, attr) > 0:
                raise ValueError(f"{attr} must be positive")
        if self.gamma_mean_mhz < self.gamma0_mean_mhz:
            raise ValueError("gamma_mean_mhz must be >= gamma0_mean_mhz")
        if not 0 < self.debye_waller <= 1:
            raise ValueError("debye_waller must lie in (0, 1]")

    @property
    def lifetime_ns(self) -> float:
        """Excited-state lifetime whose transform limit is ``gamma0_mean_mhz``."""
        return 1000.0 / (2.0 * math.pi * self.gamma0_mean_mhz)

    @property
    def dephasing_scale_mhz(self) -> float:
        # half-normal scale s with E[2 * Gamma_d] = gamma_mean - gamma0
        return (self.gamma_mean_mhz - self.gamma0_mean_mhz) / (2.0 * math.sqrt(2.0 / math.pi))

    @property
    def inhom_sigma_ghz(self) -> float:
        return self.inhom_spread_ghz / FWHM_PER_SIGMA


GEV = SpeciesParams(
    name="GeV",
    zpl_wavelength_nm=602.0,
    gamma0_mean_mhz=32.0,
    gamma_mean_mhz=54.0,
    debye_waller=0.6,
    inhom_spread_ghz=85.0,
    implant_depth_nm=74.0,
    straggle_nm=12.0,
    lateral_fwhm_nm=40.0,
)

SIV = SpeciesParams(
    name="SiV",
    zpl_wavelength_nm=737.0,
    gamma0_mean_mhz=93.0,
    gamma_mean_mhz=146.0,
    debye_waller=0.7,
    inhom_spread_ghz=30.0,
    implant_depth_nm=113.0,
    straggle_nm=19.0,
    lateral_fwhm_nm=50.0,
)

SPECIES = {"GeV": GEV, "SiV": SIV}


def get_species(name: str, **overrides) -> SpeciesParams:
    try:
        base = SPECIES[name]
    except KeyError:
        raise ValueError(f"unknown species {name!r}; expected one of {sorted(SPECIES)}") from None
    if not overrides:
        return base
    return SpeciesParams(**{**base.__dict__, **overrides})


@dataclass(frozen=True)
class Emitter:
    species: SpeciesParams
    position_nm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    lifetime_ns: float | None = None
    dephasing_mhz: float = 0.0
    zpl_offset_ghz: float = 0.0
    beta_ideal: float = 0.8
    strain_coeff_ghz_per_v2: float = STRAIN_COEFF_CENTER
    stable: bool = True

    def __post_init__(self):
        if self.lifetime_ns is None:
            object.__setattr__(self, "lifetime_ns", self.species.lifetime_ns)
        if not self.lifetime_ns > 0:
            raise ValueError("lifetime_ns must be positive")
        if self.dephasing_mhz < 0:
            raise ValueError("dephasing_mhz must be non-negative")
        if not 0 <= self.beta_ideal <= 1:
            raise ValueError("beta_ideal must lie in [0, 1]")

    @property
    def gamma0_mhz(self) -> float:
        return lifetime_limited_linewidth(self.lifetime_ns)

    @property
    def gamma_mhz(self) -> float:
        return total_linewidth(self.gamma0_mhz, self.dephasing_mhz)

    @property
    def beta_eff(self) -> float:
        """Coupling efficiency seen by a coherent probe; dephasing dilutes it by Gamma0/Gamma."""
        return self.beta_ideal * self.gamma0_mhz / self.gamma_mhz


@dataclass(frozen=True)
class CouplingFigures:
    transmission_on_resonance: float
    beta_observed: float
    cooperativity: float
    beta_dipole: float | None = None
    beta_clamped: bool = False

    @property
    def extinction(self) -> float:
        return 1.0 - self.transmission_on_resonance


def lifetime_limited_linewidth(tau_ns: float) -> float:
    """Transform-limited FWHM in MHz, ``1000 / (2 pi tau[ns])``."""
    if not tau_ns > 0:
        raise ValueError(f"lifetime must be positive, got {tau_ns}")
    return 1000.0 / (2.0 * math.pi * tau_ns)


def total_linewidth(gamma0_mhz: float, gamma_d_mhz: float) -> float:
    if gamma0_mhz < 0 or gamma_d_mhz < 0:
        raise ValueError("linewidth components must be non-negative")
    return gamma0_mhz + 2.0 * gamma_d_mhz


def extinction_to_coupling(transmission_on_resonance: float) -> CouplingFigures:
    """Invert an on-resonance transmission ``T = (1 - beta)^2`` into beta and C."""
    t = transmission_on_resonance
    if not 0 < t <= 1:
        raise ValueError(f"transmission must lie in (0, 1], got {t}")
    beta = 1.0 - math.sqrt(t)
    return CouplingFigures(
        transmission_on_resonance=t,
        beta_observed=beta,
        cooperativity=beta / (1.0 - beta),
    )


def correct_beta(beta_observed: float, gamma_mhz: float, gamma0_mhz: float,
                 debye_waller: float) -> float:
    """Undo line broadening and phonon-sideband loss on an observed beta.

    Returns ``beta_observed * (gamma / gamma0) / debye_waller`` capped at 1.
    A :class:`BetaClampWarning` is issued when the cap binds.
    """
    if not gamma0_mhz > 0:
        raise ValueError("gamma0 must be positive")
    if gamma_mhz < gamma0_mhz:
        raise ValueError(f"linewidth {gamma_mhz} MHz is narrower than the lifetime limit {gamma0_mhz} MHz")
    if not 0 < debye_waller <= 1:
        raise ValueError("debye_waller must lie in (0, 1]")
    if not 0 <= beta_observed < 1:
        raise ValueError("beta_observed must lie in [0, 1)")
    beta = beta_observed * (gamma_mhz / gamma0_mhz) / debye_waller
    if beta > 1.0:
        warnings.warn(f"corrected beta {beta:.3f} exceeds unity; clamped", BetaClampWarning, stacklevel=2)
        return 1.0
    return beta


def coupling_figures(transmission_on_resonance: float, gamma_mhz: float, gamma0_mhz: float,
                     debye_waller: float) -> CouplingFigures:
    """Extinction inversion followed by the dipole correction, with the clamp recorded."""
    base = extinction_to_coupling(transmission_on_resonance)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BetaClampWarning)
        dipole = correct_beta(base.beta_observed, gamma_mhz, gamma0_mhz, debye_waller)
    clamped = any(issubclass(w.category, BetaClampWarning) for w in caught)
    return CouplingFigures(base.transmission_on_resonance, base.beta_observed,
                           base.cooperativity, dipole, clamped)


def g2_model(delay_ns, g2_zero: float, tau_corr_ns: float):
    """Single-exponential antibunching dip ``1 - (1 - g2(0)) exp(-|t| / tau)``."""
    if g2_zero < 0:
        raise ValueError("g2_zero must be non-negative")
    if not tau_corr_ns > 0:
        raise ValueError("tau_corr_ns must be positive")
    return 1.0 - (1.0 - g2_zero) * np.exp(-np.abs(delay_ns) / tau_corr_ns)


def background_to_g2(signal_to_background_db: float) -> float:
    """g2(0) floor set by uncorrelated background at a given signal-to-background ratio."""
    if math.isnan(signal_to_background_db):
        raise ValueError("signal-to-background ratio must not be NaN")
    rho = 1.0 / (1.0 + 10.0 ** (-signal_to_background_db / 10.0))
    return 1.0 - rho * rho


def transmission_spectrum(emitter: Emitter, detunings_mhz):
    """Probe transmission ``|1 - beta_eff / (1 + 2i delta / Gamma)|^2`` versus detuning."""
    gamma = emitter.gamma_mhz
    if not gamma > 0:
        raise ValueError("emitter linewidth must be positive")
    delta = np.asarray(detunings_mhz, dtype=float)
    amp = 1.0 - emitter.beta_eff / (1.0 + 2j * delta / gamma)
    return np.abs(amp) ** 2


# population samplers shared by implant, spectra and tuning

def sample_lifetimes(species: SpeciesParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Normal(tau_species, 10 %) truncated to positive values by resampling."""
    tau = species.lifetime_ns
    out = rng.normal(tau, LIFETIME_REL_SPREAD * tau, size=n)
    bad = out <= 0
    while bad.any():
        out[bad] = rng.normal(tau, LIFETIME_REL_SPREAD * tau, size=int(bad.sum()))
        bad = out <= 0
    return out


def sample_dephasing(species: SpeciesParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.abs(rng.normal(0.0, species.dephasing_scale_mhz, size=n))


def sample_offsets(species: SpeciesParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, species.inhom_sigma_ghz, size=n)


def sample_strain_coeffs(n: int, rng: np.random.Generator) -> np.ndarray:
    """Signed strain response, magnitude log-uniform over one decade centred on the anchor."""
    half = 0.5 * STRAIN_COEFF_DECADES * math.log(10.0)
    mag = STRAIN_COEFF_CENTER * np.exp(rng.uniform(-half, half, size=n))
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return sign * mag


def sample_emitters(species: SpeciesParams, n: int, rng: np.random.Generator,
                    beta_ideal: float = 0.8) -> list[Emitter]:
    """Draw ``n`` emitters at the origin with population-level photophysics."""
    tau = sample_lifetimes(species, n, rng)
    gd = sample_dephasing(species, n, rng)
    f = sample_offsets(species, n, rng)
    k = sample_strain_coeffs(n, rng)
    return [
        Emitter(species, (0.0, 0.0, 0.0), float(tau[i]), float(gd[i]), float(f[i]),
                beta_ideal, float(k[i]))
        for i in range(n)
    ]
