"""Reference-value reproduction: every headline number recomputed from the models."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import oracles
from .assembly import PlacementModel, TaperModel, calibrate_rolloff, coupling_efficiency, penalty_db, \
    simulate_assembly
from .chiplet import AlignmentModel, ChipletDesign, calibrate_lambda, defect_free_yield, yield_vs_channels
from .config import RunConfig, build_config
from .emitters import (
    GEV,
    SIV,
    Emitter,
    background_to_g2,
    correct_beta,
    extinction_to_coupling,
    lifetime_limited_linewidth,
    sample_emitters,
    total_linewidth,
)
from .implant import ImplantSpec, fwhm_to_sigma
from .rng import stage_seed, substream
from .spectra import ScanConfig, chiplet_linewidth_report, default_scan, fit_g2, fit_lorentzian, \
    synthesize_g2, synthesize_ple
from .tuning import (
    NoCrossing,
    crossing_voltage,
    empirical_fwhm,
    max_mutually_resonant_set,
    max_resonant_pairs,
    reachable_interval,
    sample_inhomogeneous,
    stab_max,
    strained_frequency,
)

REPRO_COLUMNS = ["claim", "reference", "simulated", "tolerance", "passed"]

FIT_SEEDS = 200
CHIPLETS_PER_SPECIES = 25
ORACLE_INSTANCES = 1000
# 0.01666 GHz/V^2 closes a 10 GHz gap at 24.5 V
ANCHOR_K = 0.01666
ANCHOR_GAP_GHZ = 10.0


@dataclass(frozen=True)
class Claim:
    claim: str
    reference: float
    simulated: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(abs(self.simulated - self.reference) <= self.tolerance)


@dataclass
class ReproReport:
    claims: list[Claim]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def failures(self) -> list[Claim]:
        return [c for c in self.claims if not c.passed]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPRO_COLUMNS)
            for c in self.claims:
                w.writerow([c.claim, repr(float(c.reference)), repr(float(c.simulated)),
                            repr(float(c.tolerance)), int(c.passed)])


def _coupling_claims():
    fig = extinction_to_coupling(0.62)
    out = [Claim("extinction_to_coupling: beta = 0.213", 0.213, fig.beta_observed, 0.001),
           Claim("extinction_to_coupling: C = 0.270", 0.270, fig.cooperativity, 0.001)]
    for gamma in (35.0, 37.0, 40.0):
        out.append(Claim(f"correct_beta: beta_dipole at Gamma = {gamma:g} MHz", 0.55,
                         correct_beta(0.21, gamma, 24.0, 0.6), 0.04))
    out.append(Claim("lifetime_limited_linewidth: Gamma0(6.63 ns) = 24.0 MHz", 24.0,
                     lifetime_limited_linewidth(6.63), 0.1))
    out.append(Claim("total_linewidth: 24 + 2 x 6.5 = 37 MHz", 37.0, total_linewidth(24.0, 6.5), 1e-9))
    out.append(Claim("background_to_g2: 18 dB -> g2(0) = 0.031", 0.031, background_to_g2(18.0), 0.001))
    return out


def _yield_claims(config: RunConfig, seed: int):
    design = replace(config.design, n_channels=8)
    spec = config.implant
    cal = calibrate_lambda(design, spec, config.alignment, 0.40, seed, trials=100_000,
                           workers=config.workers)
    spec = replace(spec, mean_emitters_per_spot=cal.lam)
    y8 = defect_free_yield(design, spec, config.alignment, 100_000, seed + 1, config.workers)
    r8, r16 = yield_vs_channels(design, spec, config.alignment, [8, 16], 100_000, seed + 2, config.workers)
    sep = (r8["yield"] - r16["yield"]) / math.hypot(r8["stderr"], r16["stderr"])
    return [Claim("defect_free_yield: 8-channel = 0.40", 0.40, y8.yield_fraction, 0.02),
            Claim("yield_vs_channels: 16-channel below 8-channel by >= 3 sigma", 1.0,
                  float(sep >= 3.0), 0.0),
            _independent_channel_claim(design, config, seed + 3)]


def independent_channel_lambda(design: ChipletDesign, spec: ImplantSpec, p_channel: float) -> float:
    """Mean emitters per spot giving per-channel success ``p_channel`` with perfect alignment."""
    sigma = fwhm_to_sigma(spec.species.lateral_fwhm_nm)
    hw = design.waveguide_width_nm / 2
    q = float(ndtr(hw / sigma) - ndtr(-hw / sigma)) * spec.stable_fraction
    return -math.log1p(-p_channel) / q


def _independent_channel_claim(design, config: RunConfig, seed: int, trials: int = 100_000) -> Claim:
    p = 0.4 ** (1 / design.n_channels)
    spec = replace(config.implant, mean_emitters_per_spot=independent_channel_lambda(design, config.implant, p))
    est = defect_free_yield(design, spec, AlignmentModel(0.0, 0.0), trials, seed, config.workers)
    closed = p ** design.n_channels
    sigma = math.sqrt(closed * (1 - closed) / trials)
    return Claim("defect_free_yield: zero misalignment = p^8 within 3 MC sigma", closed,
                 est.yield_fraction, 3 * sigma)


def _assembly_claims(config: RunConfig, seed: int):
    taper = TaperModel(rolloff_w_nm=calibrate_rolloff(38.0, 0.10))
    ratio = float(coupling_efficiency(38.0, taper, 602.0) / coupling_efficiency(0.0, taper, 602.0))
    res = simulate_assembly(100_000, PlacementModel(), taper, seed, config.workers)
    off = res.offset_nm[res.placed]
    return [
        Claim("calibrate_rolloff: w = 117.07 nm", 117.07, calibrate_rolloff(38.0, 0.10), 0.01),
        Claim("coupling_efficiency: eta(38 nm) / eta(0) = 0.900", 0.900, ratio, 0.001),
        Claim("coupling_efficiency: penalty at 38 nm = 0.458 dB", 0.458, float(penalty_db(38.0, taper)), 0.002),
        Claim("coupling_efficiency: eta(0) at 602 nm = 0.97", 0.97, float(coupling_efficiency(0.0, taper, 602.0)),
              1e-12),
        Claim("simulate_assembly: placed fraction = 0.90", 0.90, float(res.placed.mean()), 0.003),
        Claim("simulate_assembly: offset mean = 38 nm", 38.0, float(off.mean()), 0.2),
        Claim("simulate_assembly: offset std = 16 nm", 16.0, float(off.std(ddof=1)), 0.2),
    ]


def fit_coverage(seed: int, n: int = FIT_SEEDS) -> tuple[float, float, float]:
    """Coverage of the true 37 MHz by +-3 reported sigma, mean sigma, mean fitted Gamma."""
    e = Emitter(GEV, lifetime_ns=6.63, dephasing_mhz=6.5)
    scan = ScanConfig()
    hits, sig, gam = 0, [], []
    for i in range(n):
        fit = fit_lorentzian(synthesize_ple(e, scan, int(substream(seed, "fit", i).integers(2**63))))
        hits += abs(fit.gamma_mhz - e.gamma_mhz) <= 3 * fit.gamma_err
        sig.append(fit.gamma_err)
        gam.append(fit.gamma_mhz)
    return hits / n, float(np.mean(sig)), float(np.mean(gam))


def _spectra_claims(config: RunConfig, seed: int):
    cov, sigma, gamma = fit_coverage(seed)
    out = [Claim("fit_lorentzian: 3-sigma coverage of 37 MHz >= 0.95", 1.0, cov, 0.05),
           Claim("fit_lorentzian: reported sigma ~ 3 MHz", 3.0, sigma, 0.5),
           Claim("fit_lorentzian: mean fitted Gamma = 37 MHz", 37.0, gamma, 1.0)]
    for g0, tol in ((0.06, 0.02), (0.19, 0.07)):
        fit = fit_g2(synthesize_g2(g0, 5.0, seed))
        out.append(Claim(f"fit_g2: g2(0) = {g0}", g0, fit.g2_zero, tol))
    for sp, target, tol, ratio in ((GEV, 54.0, 10.0, (1.7, 0.3)), (SIV, 146.0, 15.0, None)):
        means, ratios = [], []
        for c in range(CHIPLETS_PER_SPECIES):
            em = sample_emitters(sp, 8, substream(seed, "population", sp.name, c))
            _, summ = chiplet_linewidth_report(em, default_scan(sp), int(substream(seed, "report", c).integers(2**63)),
                                               config.workers)
            means.append(summ["mean"])
            ratios.append(summ["mean_ratio"])
        out.append(Claim(f"chiplet_linewidth_report: {sp.name} mean Gamma = {target:g} MHz", target,
                         float(np.mean(means)), tol))
        if ratio:
            out.append(Claim(f"chiplet_linewidth_report: {sp.name} Gamma/Gamma0 = {ratio[0]}", ratio[0],
                             float(np.mean(ratios)), ratio[1]))
    return out


def _tuning_claims(config: RunConfig, seed: int):
    act = config.actuator
    out = []
    for sp, target, tol in ((GEV, 85.0, 2.0), (SIV, 30.0, 1.0)):
        out.append(Claim(f"sample_inhomogeneous: {sp.name} FWHM = {target:g} GHz", target,
                         empirical_fwhm(sample_inhomogeneous(sp, 100_000, seed)), tol))
    a = Emitter(GEV, zpl_offset_ghz=0.0, strain_coeff_ghz_per_v2=ANCHOR_K)
    b = Emitter(GEV, zpl_offset_ghz=ANCHOR_GAP_GHZ, strain_coeff_ghz_per_v2=0.0)
    try:
        v = crossing_voltage(a, b, act)
        gap = abs(strained_frequency(0.0, ANCHOR_K, v, act.cap_ghz) - ANCHOR_GAP_GHZ)
    except NoCrossing:
        v, gap = math.nan, math.nan
    out.append(Claim("crossing_voltage: 10 GHz gap closes at 24.5 V", 24.5, v, 0.01))
    out.append(Claim("crossing_voltage: residual detuning at V*", 0.0, gap, 1e-9))
    lo, hi = reachable_interval(a, act)
    out.append(Claim("reachable_interval: tuning range up to 100 GHz", 100.0, hi - lo, 1e-9))

    rng = substream(seed, "oracle")
    mismatches = 0
    for _ in range(ORACLE_INSTANCES):
        emitters, actuator = oracles.random_instance(rng)
        iv = [reachable_interval(e, actuator) for e in emitters]
        x_ref, n_ref = oracles.brute_force_stab(iv)
        plan = max_mutually_resonant_set(emitters, actuator)
        m_ref = oracles.brute_force_matching_size(len(emitters), oracles.interval_edges(emitters, actuator))
        if (plan.size, plan.target_freq_ghz) != (n_ref, x_ref) or stab_max(iv)[1] != n_ref:
            mismatches += 1
        if len(max_resonant_pairs(emitters, actuator)) != m_ref:
            mismatches += 1
    out.append(Claim(f"optimizers vs exhaustive oracles on {ORACLE_INSTANCES} instances: mismatches", 0.0,
                     float(mismatches), 0.0))
    return out


def reproduce_paper(seed: int = 42, config: RunConfig | None = None) -> ReproReport:
    config = build_config() if config is None else config
    claims = _coupling_claims()
    claims += _yield_claims(config, stage_seed(seed, "repro-yield"))
    claims += _assembly_claims(config, stage_seed(seed, "repro-assembly"))
    claims += _spectra_claims(config, stage_seed(seed, "repro-spectra"))
    claims += _tuning_claims(config, stage_seed(seed, "repro-tuning"))
    return ReproReport(claims)


def write_report(report: ReproReport, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "repro.csv"
    report.write_csv(path)
    return path


def run_reproduce(config: RunConfig, out: Path | None = None) -> ReproReport:
    """Reproduce every claim, write ``repro.csv`` and the manifest."""
    from .pipeline import write_manifest

    out = Path(config.output_dir if out is None else out)
    report = reproduce_paper(config.seed, config)
    write_report(report, out)
    write_manifest(out, config, {"command": "reproduce"})
    return report
