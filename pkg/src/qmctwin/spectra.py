"""Synthetic PLE scans, transmission dips and g2 histograms, and fits to them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .emitters import Emitter, SpeciesParams, g2_model, transmission_spectrum
from .lm import levenberg_marquardt
from .rng import map_ordered, substream

FIT_COLUMNS = ["channel", "gamma_mhz", "gamma_err", "gamma0_mhz", "ratio", "center_offset_ghz",
               "converged"]


class NoPeak(ValueError):
    """The spectrum has no feature at least 5 sigma above its background."""


class DegenerateData(ValueError):
    pass


@dataclass(frozen=True)
class ScanConfig:
    """PLE / transmission scan settings.

    Count levels are not given by the experiment they imitate. The defaults
    (with ``dwell_s * repeats = 0.5 s`` per point) are set so that fitting a
    37 MHz line returns a 1-sigma linewidth error of about 3 MHz.
    """

    center_offset_ghz: float = 0.0
    span_mhz: float = 200.0
    n_points: int = 41
    repeats: int = 5000
    peak_rate_cps: float = 170.0
    background_cps: float = 8.5
    dwell_s: float = 1e-4

    def __post_init__(self):
        if not self.span_mhz > 0:
            raise ValueError("span_mhz must be positive")
        if self.n_points < 5:
            raise ValueError("n_points must be >= 5")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.peak_rate_cps < 0 or self.background_cps < 0:
            raise ValueError("rates must be non-negative")
        if not self.dwell_s > 0:
            raise ValueError("dwell_s must be positive")

    def detunings(self) -> np.ndarray:
        return np.linspace(-self.span_mhz / 2, self.span_mhz / 2, self.n_points)

    @property
    def exposure_s(self) -> float:
        return self.dwell_s * self.repeats


def default_scan(species: SpeciesParams, **overrides) -> ScanConfig:
    """Scan wide enough for the species' typical broadened line (~8 mean linewidths)."""
    span = 8.0 * species.gamma_mean_mhz
    n = int(round(span / 5.0)) + 1 if species.gamma_mean_mhz < 100 else 81
    return replace(ScanConfig(span_mhz=span, n_points=n), **overrides)


@dataclass
class Spectrum:
    detuning_mhz: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.detuning_mhz = np.asarray(self.detuning_mhz, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.detuning_mhz.shape != self.counts.shape:
            raise ValueError("detuning and counts must have equal length")
        if np.any(np.diff(self.detuning_mhz) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")


@dataclass
class TransmissionSpectrum(Spectrum):
    baseline_counts: float = 1.0

    @property
    def transmission(self) -> np.ndarray:
        return self.counts / self.baseline_counts


@dataclass(frozen=True)
class FitResult:
    center_mhz: float
    gamma_mhz: float
    amplitude: float
    background: float
    center_err: float
    gamma_err: float
    amplitude_err: float
    background_err: float
    converged: bool
    residual_norm: float
    iterations: int = 0
    history: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class DipFit:
    center_mhz: float
    gamma_mhz: float
    depth: float
    scale: float
    center_err: float
    gamma_err: float
    depth_err: float
    converged: bool

    @property
    def transmission_on_resonance(self) -> float:
        return 1.0 - self.depth


@dataclass
class CorrelationHistogram:
    delay_bins_ns: np.ndarray
    coincidences: np.ndarray

    def __post_init__(self):
        self.delay_bins_ns = np.asarray(self.delay_bins_ns, dtype=float)
        self.coincidences = np.asarray(self.coincidences)
        if self.delay_bins_ns.shape != self.coincidences.shape:
            raise ValueError("bins and coincidences must have equal length")
        if not np.allclose(self.delay_bins_ns, -self.delay_bins_ns[::-1], atol=1e-9):
            raise ValueError("delay bins must be symmetric about zero")


@dataclass(frozen=True)
class G2Fit:
    g2_zero: float
    g2_zero_err: float
    tau_corr_ns: float
    tau_corr_err: float
    asymptote: float
    converged: bool
    tau_identifiable: bool


def lorentzian(x, center, gamma, amplitude, background):
    hw2 = (gamma / 2) ** 2
    return amplitude * hw2 / ((x - center) ** 2 + hw2) + background


def _line_offset_mhz(emitter: Emitter, scan: ScanConfig) -> float:
    return (emitter.zpl_offset_ghz - scan.center_offset_ghz) * 1000.0


def synthesize_ple(emitter: Emitter, scan: ScanConfig, seed: int) -> Spectrum:
    x = scan.detunings()
    rate = lorentzian(x, _line_offset_mhz(emitter, scan), emitter.gamma_mhz,
                      scan.peak_rate_cps, scan.background_cps)
    counts = substream(seed, "ple").poisson(rate * scan.exposure_s)
    return Spectrum(x, counts)


def _outer_quartile(y: np.ndarray) -> np.ndarray:
    q = max(1, len(y) // 4)
    return np.concatenate([y[:q], y[-q:]])


def _half_width_crossings(x, y, i_peak, level):
    """Interpolated abscissae where ``y`` drops through ``level`` on each side of the peak."""
    left = x[0]
    for i in range(i_peak, 0, -1):
        if y[i - 1] < level <= y[i]:
            left = x[i - 1] + (level - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    right = x[-1]
    for i in range(i_peak, len(x) - 1):
        if y[i + 1] < level <= y[i]:
            right = x[i] + (y[i] - level) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    return left, right


def _lorentz_residual(x, y):
    def residual(p):
        return lorentzian(x, *p) - y

    def jacobian(p):
        c, g, a, _ = p
        hw2 = (g / 2) ** 2
        den = (x - c) ** 2 + hw2
        shape = hw2 / den
        d_c = a * hw2 * 2 * (x - c) / den**2
        d_g = a * (g / 2) * (x - c) ** 2 / den**2
        return np.column_stack([d_c, d_g, shape, np.ones_like(x)])

    return residual, jacobian


def fit_lorentzian(spectrum: Spectrum, max_iter: int = 200) -> FitResult:
    """Weighted least-squares Lorentzian fit of a PLE spectrum.

    Weights are ``1 / max(counts, 1)``. Raises :class:`NoPeak` when the
    largest bin is not 5 sigma above the background estimate.
    """
    x = spectrum.detuning_mhz
    y = spectrum.counts.astype(float)
    if len(x) < 5:
        raise ValueError("need at least 5 points")
    bg = float(np.median(_outer_quartile(y)))
    i_peak = int(np.argmax(y))
    amp = y[i_peak] - bg
    if amp < 5.0 * math.sqrt(max(bg, 1.0)):
        raise NoPeak(f"peak {amp:.1f} counts above background {bg:.1f} is below 5 sigma")
    step = float(np.median(np.diff(x)))
    left, right = _half_width_crossings(x, y, i_peak, bg + amp / 2)
    gamma = max(right - left, step)

    residual, jacobian = _lorentz_residual(x, y)
    w = 1.0 / np.maximum(y, 1.0)
    p0 = np.array([x[i_peak], gamma, amp, bg])
    xscale = np.array([gamma, gamma, abs(amp), max(abs(bg), abs(amp))])
    res = levenberg_marquardt(residual, jacobian, p0, w, xscale=xscale, max_iter=max_iter)
    err = np.sqrt(np.clip(np.diag(res.cov), 0, None))
    c, g, a, b = res.params
    converged = res.converged and g != 0 and np.all(np.isfinite(res.params))
    return FitResult(float(c), float(abs(g)), float(a), float(b), *map(float, err),
                     bool(converged), math.sqrt(res.chi2), res.iterations, tuple(res.history))


def synthesize_transmission_scan(emitter: Emitter, scan: ScanConfig, seed: int,
                                 probe_rate_cps: float | None = None) -> TransmissionSpectrum:
    """Probe counts through the waveguide, normalised by a far-detuned reference.

    The reference is an independent Poisson measurement with the same total
    exposure as the whole scan, taken with the probe far from the line.
    """
    probe = scan.peak_rate_cps if probe_rate_cps is None else probe_rate_cps
    x = scan.detunings()
    t = transmission_spectrum(emitter, x - _line_offset_mhz(emitter, scan))
    rng = substream(seed, "transmission")
    mean = probe * scan.exposure_s
    counts = rng.poisson(t * mean)
    baseline = rng.poisson(mean * len(x)) / len(x)
    return TransmissionSpectrum(x, counts, baseline_counts=float(max(baseline, 1e-300)))


def fit_transmission_dip(spectrum: TransmissionSpectrum, max_iter: int = 200) -> DipFit:
    """Fit ``S (1 - D / (1 + (2 (x - x0) / Gamma)^2))`` to transmitted counts."""
    x = spectrum.detuning_mhz
    y = spectrum.counts.astype(float)
    s0 = float(np.median(_outer_quartile(y)))
    if s0 <= 0:
        raise DegenerateData("no transmitted counts off resonance")
    i_min = int(np.argmin(y))
    depth = 1.0 - y[i_min] / s0
    step = float(np.median(np.diff(x)))
    if depth <= 0:
        gamma = step
    else:
        inv = s0 - y
        left, right = _half_width_crossings(x, inv, i_min, s0 * depth / 2)
        gamma = max(right - left, step)

    def residual(p):
        c, g, d, s = p
        return s * (1 - d / (1 + (2 * (x - c) / g) ** 2)) - y

    def jacobian(p):
        c, g, d, s = p
        u = 2 * (x - c) / g
        den = 1 + u * u
        d_c = -s * d * (2 * u * 2 / g) / den**2
        d_g = -s * d * (2 * u * u / g) / den**2
        return np.column_stack([d_c, d_g, -s / den, 1 - d / den])

    w = 1.0 / np.maximum(y, 1.0)
    p0 = np.array([x[i_min], gamma, max(depth, 1e-3), s0])
    res = levenberg_marquardt(residual, jacobian, p0, w,
                              xscale=np.array([gamma, gamma, 1.0, s0]), max_iter=max_iter)
    err = np.sqrt(np.clip(np.diag(res.cov), 0, None))
    c, g, d, s = res.params
    # depth relative to the far-detuned reference, not the fitted wing level
    depth_abs = 1.0 - s * (1 - d) / spectrum.baseline_counts
    return DipFit(float(c), float(abs(g)), float(depth_abs), float(s / spectrum.baseline_counts),
                  float(err[0]), float(err[1]), float(err[2]), bool(res.converged))


def synthesize_g2(g2_zero: float, tau_corr_ns: float, seed: int, bin_ns: float = 1.0,
                  max_delay_ns: float = 50.0, asymptote_counts: float = 2000.0) -> CorrelationHistogram:
    n = int(round(max_delay_ns / bin_ns))
    delays = np.arange(-n, n + 1) * bin_ns
    mean = asymptote_counts * g2_model(delays, g2_zero, tau_corr_ns)
    return CorrelationHistogram(delays, substream(seed, "g2").poisson(mean))


def fit_g2(hist: CorrelationHistogram, max_iter: int = 200) -> G2Fit:
    """Fit ``A (1 - (1 - g0) exp(-|t| / tau))``; ``A`` is the histogram's uncorrelated level."""
    t = hist.delay_bins_ns
    y = hist.coincidences.astype(float)
    if len(t) < 7:
        raise ValueError("need at least 7 bins")
    if y.sum() <= 0:
        raise DegenerateData("histogram is empty")
    order = np.argsort(np.abs(t), kind="stable")
    far = y[order[-max(2, len(t) // 4):]]
    a0 = float(np.median(far))
    if a0 <= 0:
        raise DegenerateData("zero asymptotic coincidence level")
    g0 = float(np.clip(y[order[0]] / a0, 0.0, 1.5))
    dip = 1 - g0
    tau0 = float(np.max(np.abs(t))) / 10
    if dip > 0:
        level = a0 * (1 - dip / math.e)
        for i in order:
            if y[i] >= level and t[i] != 0:
                tau0 = abs(t[i])
                break
    tau0 = max(tau0, float(np.min(np.abs(np.diff(t)))) / 2)

    # keep tau between a hundredth of a bin and a hundred histogram spans
    lt_lo = math.log(float(np.min(np.abs(np.diff(t)))) / 100)
    lt_hi = math.log(100 * float(np.max(np.abs(t))))

    def residual(p):
        a, g, lt = p
        if not lt_lo <= lt <= lt_hi:
            return np.full_like(y, np.inf)
        return a * (1 - (1 - g) * np.exp(-np.abs(t) / math.exp(lt))) - y

    def jacobian(p):
        a, g, lt = p
        tau = math.exp(lt)
        e = np.exp(-np.abs(t) / tau)
        return np.column_stack([1 - (1 - g) * e, a * e, -a * (1 - g) * e * np.abs(t) / tau])

    w = 1.0 / np.maximum(y, 1.0)
    res = levenberg_marquardt(residual, jacobian, np.array([a0, g0, math.log(tau0)]), w,
                              xscale=np.array([a0, 1.0, 1.0]), max_iter=max_iter)
    a, g, lt = res.params
    err = np.sqrt(np.clip(np.diag(res.cov), 0, None))
    tau = math.exp(lt)
    tau_err = tau * err[2]
    identifiable = (not res.singular and abs(1 - g) > 3 * err[1] and err[2] < 1.0)
    return G2Fit(float(g), float(err[1]), tau, float(tau_err), float(a), bool(res.converged),
                 bool(identifiable))


def _report_row(channel: int, emitter: Emitter, scan: ScanConfig, seed: int) -> dict:
    scan_i = replace(scan, center_offset_ghz=emitter.zpl_offset_ghz)
    spec = synthesize_ple(emitter, scan_i, int(substream(seed, "channel", channel).integers(2**63)))
    row = {"channel": channel, "gamma0_mhz": emitter.gamma0_mhz, "spectrum": spec}
    try:
        fit = fit_lorentzian(spec)
    except NoPeak:
        return {**row, "gamma_mhz": math.nan, "gamma_err": math.nan, "ratio": math.nan,
                "center_offset_ghz": math.nan, "converged": False}
    return {**row, "gamma_mhz": fit.gamma_mhz, "gamma_err": fit.gamma_err,
            "ratio": fit.gamma_mhz / emitter.gamma0_mhz,
            "center_offset_ghz": scan_i.center_offset_ghz + fit.center_mhz / 1000.0,
            "converged": fit.converged}


def chiplet_linewidth_report(emitters: list[Emitter], scan: ScanConfig, seed: int,
                             workers: int = 1) -> tuple[list[dict], dict]:
    """Scan and fit each channel's emitter; summarise linewidths and spectral spread.

    Each scan is centred on its emitter's ZPL; the synthesized data are kept
    under the row's ``spectrum`` key. Failed fits stay in the table with
    ``converged = False`` and are left out of the summary.
    """
    if not emitters:
        raise ValueError("need at least one emitter")
    rows = map_ordered(lambda i: _report_row(i, emitters[i], scan, seed), range(len(emitters)), workers)
    ok = [r for r in rows if r["converged"]]
    gam = np.array([r["gamma_mhz"] for r in ok])
    rat = np.array([r["ratio"] for r in ok])
    f = np.array([r["center_offset_ghz"] for r in ok])
    summary = {
        "n_converged": len(ok),
        "mean": float(gam.mean()) if len(ok) else math.nan,
        "std": float(gam.std(ddof=1)) if len(ok) > 1 else math.nan,
        "mean_ratio": float(rat.mean()) if len(ok) else math.nan,
        "std_ratio": float(rat.std(ddof=1)) if len(ok) > 1 else math.nan,
        "inhom_spread_ghz": float(f.max() - f.min()) if len(ok) else math.nan,
    }
    return rows, summary


def write_spectrum_csv(spectrum: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detuning_mhz", "counts"])
        for x, c in zip(spectrum.detuning_mhz, spectrum.counts):
            w.writerow([repr(float(x)), int(c)])


def read_spectrum_csv(path) -> Spectrum:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return Spectrum([float(r["detuning_mhz"]) for r in rows], [int(r["counts"]) for r in rows])


def write_fit_report_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_COLUMNS)
        for r in rows:
            w.writerow([r["channel"], repr(r["gamma_mhz"]), repr(r["gamma_err"]), repr(r["gamma0_mhz"]),
                        repr(r["ratio"]), repr(r["center_offset_ghz"]), int(r["converged"])])


def read_fit_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{"channel": int(r["channel"]),
                 **{k: float(r[k]) for k in FIT_COLUMNS[1:-1]},
                 "converged": bool(int(r["converged"]))} for r in csv.DictReader(fh)]


def write_histogram_csv(hist: CorrelationHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delay_ns", "coincidences"])
        for t, c in zip(hist.delay_bins_ns, hist.coincidences):
            w.writerow([repr(float(t)), int(c)])


def read_histogram_csv(path) -> CorrelationHistogram:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return CorrelationHistogram([float(r["delay_ns"]) for r in rows],
                                [int(r["coincidences"]) for r in rows])
