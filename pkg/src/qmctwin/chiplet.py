"""Waveguide chiplets laid over implant grids: coupling, defect-free yield, calibration.

The Monte Carlo yield estimator does not materialise emitters. Given the
chiplet's misalignment, each emitter of a spot lands in a channel window
independently, so by Poisson thinning the stable emitters coupled to channel
``j`` are Poisson with rate ``lambda * p_s * sum_spots P(window | offset)``.
One uniform per channel then decides ``count >= threshold``. Reusing those
uniforms (common random numbers) makes the estimate monotone in ``lambda``,
``p_s`` and the channel count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr
from scipy.stats import poisson

from .implant import ImplantSpec, ImplantSpot, fwhm_to_sigma, generate_spots
from .rng import block_bounds, map_ordered, substream

YIELD_BLOCK = 4096
# uniform columns drawn per chiplet; channel j always reads column j
UNIFORM_WIDTH = 64

YIELD_COLUMNS = ["n_channels", "lambda", "sigma_offset_nm", "threshold", "trials", "yield", "stderr"]


class CalibrationFailed(RuntimeError):
    def __init__(self, message: str, bracket: tuple[float, float], yields: tuple[float, float]):
        super().__init__(message)
        self.bracket = bracket
        self.yields = yields


@dataclass(frozen=True)
class ChipletDesign:
    n_channels: int = 8
    waveguide_width_nm: float = 340.0
    waveguide_height_nm: float = 200.0
    channel_pitch_nm: float = 1000.0
    min_emitters_per_channel: int = 1

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not (self.waveguide_width_nm > 0 and self.waveguide_height_nm > 0):
            raise ValueError("waveguide dimensions must be positive")
        if not self.channel_pitch_nm > 0:
            raise ValueError("channel_pitch_nm must be positive")
        if self.min_emitters_per_channel < 0:
            raise ValueError("min_emitters_per_channel must be >= 0")

    def centers(self) -> np.ndarray:
        return np.arange(self.n_channels) * self.channel_pitch_nm


@dataclass(frozen=True)
class AlignmentModel:
    sigma_offset_nm: float = 100.0
    rotation_mrad_sigma: float = 0.0

    def __post_init__(self):
        if self.sigma_offset_nm < 0 or self.rotation_mrad_sigma < 0:
            raise ValueError("alignment scales must be non-negative")


@dataclass(frozen=True)
class YieldEstimate:
    yield_fraction: float
    stderr: float
    successes: int
    trials: int


@dataclass(frozen=True)
class Calibration:
    lam: float
    yield_fraction: float
    stderr: float
    iterations: int


def _to_chiplet_frame(x, y, dx, dy, theta, xc, yc):
    c, s = np.cos(theta), np.sin(theta)
    return xc + c * (x + dx - xc) - s * (y + dy - yc)


def coupled_emitters(design: ChipletDesign, spots: list[ImplantSpot],
                     offset: tuple[float, float] = (0.0, 0.0), rotation_rad: float = 0.0) -> list[list]:
    """Stable emitters inside each waveguide's lateral window, per channel, in spot order."""
    out = [[] for _ in range(design.n_channels)]
    if not spots:
        return out
    hw = design.waveguide_width_nm / 2
    xc = (design.n_channels - 1) * design.channel_pitch_nm / 2
    yc = float(np.mean([s.nominal_xy_nm[1] for s in spots]))
    for s in spots:
        for e in s.emitters:
            if not e.stable:
                continue
            x = _to_chiplet_frame(e.position_nm[0], e.position_nm[1], offset[0], offset[1],
                                  rotation_rad, xc, yc)
            j = int(np.rint(x / design.channel_pitch_nm))
            if 0 <= j < design.n_channels and abs(x - j * design.channel_pitch_nm) <= hw:
                out[j].append(e)
    return out


def count_coupled(design: ChipletDesign, spots: list[ImplantSpot],
                  offset: tuple[float, float] = (0.0, 0.0), rotation_rad: float = 0.0) -> np.ndarray:
    return np.array([len(c) for c in coupled_emitters(design, spots, offset, rotation_rad)], dtype=int)


def _draw_block(rng: np.random.Generator, n: int, width: int):
    shift = rng.standard_normal((n, 2))
    rot = rng.standard_normal(n)
    u = rng.random((n, width))
    return shift, rot, u


def _unit_rates(design: ChipletDesign, spec: ImplantSpec, alignment: AlignmentModel,
                shift: np.ndarray, rot: np.ndarray) -> np.ndarray:
    """Expected coupled stable emitters per channel at lambda = 1, shape (trials, channels)."""
    n_ch, pitch = design.n_channels, design.channel_pitch_nm
    hw = design.waveguide_width_nm / 2
    sigma = fwhm_to_sigma(spec.species.lateral_fwhm_nm)
    rows = spec.grid_rows
    sx = np.repeat(np.arange(n_ch) * spec.pitch_nm, rows)
    sy = np.tile(np.arange(rows) * spec.pitch_nm, n_ch)
    xc = (n_ch - 1) * pitch / 2
    yc = (rows - 1) * spec.pitch_nm / 2

    dx = alignment.sigma_offset_nm * shift[:, :1]
    dy = alignment.sigma_offset_nm * shift[:, 1:]
    theta = 1e-3 * alignment.rotation_mrad_sigma * rot[:, None]
    x = _to_chiplet_frame(sx[None, :], sy[None, :], dx, dy, theta, xc, yc)

    rates = np.zeros((len(shift), n_ch))
    nearest = np.rint(x / pitch).astype(int)
    trial_idx = np.broadcast_to(np.arange(len(shift))[:, None], x.shape)
    # windows are pitch-separated; an emitter can only reach its nearest channel or a neighbour
    for step in (-1, 0, 1):
        j = nearest + step
        d = x - j * pitch
        p = ndtr((hw - d) / sigma) - ndtr((-hw - d) / sigma)
        ok = (j >= 0) & (j < n_ch)
        np.add.at(rates, (trial_idx[ok], j[ok]), p[ok])
    return rates * spec.stable_fraction


def _successes(unit_rates: np.ndarray, u: np.ndarray, lam: float, threshold: int) -> int:
    if threshold <= 0:
        return len(u)
    n_ch = unit_rates.shape[1]
    p_short = poisson.cdf(threshold - 1, lam * unit_rates)
    ok = u[:, :n_ch] >= p_short
    return int(np.count_nonzero(ok.all(axis=1)))


def _block_state(design, spec, alignment, seed, b, lo, hi):
    rng = substream(seed, "yield", b)
    shift, rot, u = _draw_block(rng, hi - lo, max(UNIFORM_WIDTH, design.n_channels))
    return _unit_rates(design, spec, alignment, shift, rot), u


def defect_free_yield(design: ChipletDesign, implant_spec: ImplantSpec, alignment: AlignmentModel,
                      trials: int, seed: int, workers: int = 1) -> YieldEstimate:
    """Fraction of simulated chiplets with every channel at or above threshold."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    bounds = block_bounds(trials, YIELD_BLOCK)
    lam, thr = implant_spec.mean_emitters_per_spot, design.min_emitters_per_channel

    def run(b):
        rates, u = _block_state(design, implant_spec, alignment, seed, b, *bounds[b])
        return _successes(rates, u, lam, thr)

    hits = sum(map_ordered(run, range(len(bounds)), workers))
    p = hits / trials
    return YieldEstimate(p, math.sqrt(p * (1 - p) / trials), hits, trials)


def calibrate_lambda(design: ChipletDesign, implant_spec: ImplantSpec, alignment: AlignmentModel,
                     target_yield: float, seed: int, trials: int = 100_000, lam_hi: float = 100.0,
                     tol: float = 0.01, xtol: float = 1e-3, workers: int = 1) -> Calibration:
    """Bisect the mean emitters per spot until the simulated yield hits ``target_yield``.

    All evaluations share one set of random draws, so the yield curve being
    bisected is monotone in lambda.
    """
    if not 0 < target_yield < 1:
        raise ValueError("target_yield must lie in (0, 1)")
    bounds = block_bounds(trials, YIELD_BLOCK)
    state = map_ordered(lambda b: _block_state(design, implant_spec, alignment, seed, b, *bounds[b]),
                        range(len(bounds)), workers)
    thr = design.min_emitters_per_channel

    def yield_at(lam):
        return sum(_successes(r, u, lam, thr) for r, u in state) / trials

    lo, hi = 0.0, float(lam_hi)
    y_lo, y_hi = yield_at(lo), yield_at(hi)
    if y_hi < target_yield - tol or y_lo > target_yield + tol:
        raise CalibrationFailed(
            f"target yield {target_yield} outside [{y_lo:.4f}, {y_hi:.4f}] on lambda in [{lo}, {hi}]",
            (lo, hi), (y_lo, y_hi))

    it = 0
    lam, y = (lo, y_lo) if abs(y_lo - target_yield) <= abs(y_hi - target_yield) else (hi, y_hi)
    while abs(y - target_yield) >= tol and hi - lo >= xtol:
        it += 1
        lam = 0.5 * (lo + hi)
        y = yield_at(lam)
        if y < target_yield:
            lo = lam
        else:
            hi = lam
    return Calibration(lam, y, math.sqrt(y * (1 - y) / trials), it)


def yield_vs_channels(design: ChipletDesign, implant_spec: ImplantSpec, alignment: AlignmentModel,
                      channel_counts, trials: int, seed: int, workers: int = 1) -> list[dict]:
    """Yield table over channel counts; one seed for all rows so the rows are paired."""
    rows = []
    for n in channel_counts:
        est = defect_free_yield(replace(design, n_channels=int(n)), implant_spec, alignment,
                                trials, seed, workers)
        rows.append({
            "n_channels": int(n),
            "lambda": implant_spec.mean_emitters_per_spot,
            "sigma_offset_nm": alignment.sigma_offset_nm,
            "threshold": design.min_emitters_per_channel,
            "trials": trials,
            "yield": est.yield_fraction,
            "stderr": est.stderr,
        })
    return rows


def explicit_chiplet_trial(design: ChipletDesign, implant_spec: ImplantSpec, alignment: AlignmentModel,
                           seed: int, trial: int) -> bool:
    """One chiplet simulated emitter by emitter; the slow reference for the thinned estimator."""
    spec = replace(implant_spec, grid_cols=design.n_channels)
    spots = generate_spots(spec, int(substream(seed, "explicit", trial).integers(2**63)))
    rng = substream(seed, "explicit-align", trial)
    dx, dy = alignment.sigma_offset_nm * rng.standard_normal(2)
    theta = 1e-3 * alignment.rotation_mrad_sigma * rng.standard_normal()
    counts = count_coupled(design, spots, (dx, dy), theta)
    return bool(np.all(counts >= design.min_emitters_per_channel))


def write_yield_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(YIELD_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in YIELD_COLUMNS])


def read_yield_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({k: (int(v) if k in ("n_channels", "threshold", "trials") else float(v))
                        for k, v in r.items()})
        return out
