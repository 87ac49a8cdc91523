"""Pick-and-place assembly, taper coupling versus placement error, photon budgets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import fsolve
from scipy.stats import norm, truncnorm

from .rng import block_bounds, map_ordered, substream

SOCKET_BLOCK = 8192
ASSEMBLY_COLUMNS = ["socket_id", "placed", "offset_nm", "eta_602", "eta_737", "budget"]


def calibrate_rolloff(offset_ref_nm: float, drop_fraction: float) -> float:
    """Gaussian roll-off width giving a fractional drop ``drop_fraction`` at ``offset_ref_nm``."""
    if not offset_ref_nm > 0:
        raise ValueError("offset_ref_nm must be positive")
    if not 0 < drop_fraction < 1:
        raise ValueError("drop_fraction must lie in (0, 1)")
    return offset_ref_nm / math.sqrt(math.log(1.0 / (1.0 - drop_fraction)))


def _default_eta0():
    return {602.0: 0.97, 737.0: 0.98}


@dataclass(frozen=True)
class TaperModel:
    eta0_by_wavelength: dict = field(default_factory=_default_eta0)
    rolloff_w_nm: float = field(default_factory=lambda: calibrate_rolloff(38.0, 0.10))

    def __post_init__(self):
        if not self.eta0_by_wavelength:
            raise ValueError("taper needs at least one wavelength")
        for wl, eta in self.eta0_by_wavelength.items():
            if not 0 < eta <= 1:
                raise ValueError(f"eta0 at {wl} nm must lie in (0, 1]")
        if not self.rolloff_w_nm > 0:
            raise ValueError("rolloff_w_nm must be positive")

    def eta0(self, wavelength_nm: float) -> float:
        for wl, eta in self.eta0_by_wavelength.items():
            if math.isclose(float(wl), float(wavelength_nm)):
                return eta
        raise KeyError(f"no taper efficiency at {wavelength_nm} nm; known: "
                       f"{sorted(float(w) for w in self.eta0_by_wavelength)}")


@dataclass(frozen=True)
class PlacementModel:
    """Placement success and the moments of the transverse offset magnitude."""

    success_prob: float = 0.90
    offset_mean_nm: float = 38.0
    offset_std_nm: float = 16.0

    def __post_init__(self):
        if not 0 <= self.success_prob <= 1:
            raise ValueError("success_prob must lie in [0, 1]")
        if self.offset_std_nm < 0:
            raise ValueError("offset_std_nm must be non-negative")
        if self.offset_mean_nm < 0:
            raise ValueError("offset_mean_nm must be non-negative")
        if 0 < self.offset_std_nm and self.offset_std_nm >= self.offset_mean_nm:
            # a non-negative offset magnitude always has std below its mean
            raise ValueError("offset_std_nm must be smaller than offset_mean_nm")


def coupling_efficiency(offset_nm, taper: TaperModel, wavelength_nm: float):
    if np.any(np.asarray(offset_nm) < 0):
        raise ValueError("offset must be non-negative")
    eta0 = taper.eta0(wavelength_nm)
    return eta0 * np.exp(-(np.asarray(offset_nm, dtype=float) / taper.rolloff_w_nm) ** 2)


def penalty_db(offset_nm, taper: TaperModel, wavelength_nm: float = 602.0):
    ratio = coupling_efficiency(offset_nm, taper, wavelength_nm) / taper.eta0(wavelength_nm)
    return -10.0 * np.log10(ratio)


def _truncated_moments(mu: float, sigma: float) -> tuple[float, float]:
    a = -mu / sigma
    mills = math.exp(norm.logpdf(a) - norm.logsf(a))
    mean = mu + sigma * mills
    var = sigma**2 * (1 + a * mills - mills**2)
    return mean, math.sqrt(max(var, 0.0))


@lru_cache(maxsize=64)
def parent_normal(mean: float, std: float) -> tuple[float, float]:
    """Parent Normal(mu, sigma) whose truncation to [0, inf) has the given mean and std."""
    if std == 0:
        return mean, 0.0
    if std >= mean:
        # truncated normals on [0, inf) always have std < mean
        raise ValueError(f"offset std {std} too large for mean {mean}")

    def gap(p):
        m, s = _truncated_moments(p[0], math.exp(p[1]))
        return [(m - mean) / std, (s - std) / std]

    sol, info, ier, msg = fsolve(gap, [mean, math.log(std)], full_output=True, xtol=1e-14)
    if ier != 1:
        raise RuntimeError(f"could not match offset moments: {msg}")
    return float(sol[0]), float(math.exp(sol[1]))


def sample_offsets(placement: PlacementModel, n: int, rng: np.random.Generator) -> np.ndarray:
    mu, sigma = parent_normal(placement.offset_mean_nm, placement.offset_std_nm)
    u = rng.random(n)
    if sigma == 0:
        return np.full(n, mu)
    return truncnorm.ppf(u, -mu / sigma, np.inf, loc=mu, scale=sigma)


@dataclass(frozen=True)
class AssemblyResult:
    placed: np.ndarray
    offset_nm: np.ndarray
    eta: dict

    def __len__(self):
        return len(self.placed)


def simulate_assembly(sockets: int, placement: PlacementModel, taper: TaperModel, seed: int,
                      workers: int = 1) -> AssemblyResult:
    """Place one chiplet per socket; empty sockets carry NaN offset and zero efficiency."""
    if sockets < 1:
        raise ValueError("sockets must be >= 1")
    bounds = block_bounds(sockets, SOCKET_BLOCK)

    def run(b):
        lo, hi = bounds[b]
        rng = substream(seed, "assembly", b)
        placed = rng.random(hi - lo) < placement.success_prob
        offsets = sample_offsets(placement, hi - lo, rng)
        return placed, offsets

    parts = map_ordered(run, range(len(bounds)), workers)
    placed = np.concatenate([p for p, _ in parts])
    offset = np.where(placed, np.concatenate([o for _, o in parts]), np.nan)
    eta = {}
    for wl in taper.eta0_by_wavelength:
        e = np.zeros(sockets)
        e[placed] = coupling_efficiency(offset[placed], taper, wl)
        eta[float(wl)] = e
    return AssemblyResult(placed, offset, eta)


def channel_budget(beta_dipole: float, debye_waller: float, gamma0: float, gamma: float,
                   eta_taper: float, extra_loss_db: float = 0.0) -> float:
    """End-to-end probability that an emitted photon reaches the AlN waveguide in the ZPL."""
    if not (0 <= beta_dipole <= 1 and 0 < debye_waller <= 1 and 0 <= eta_taper <= 1):
        raise ValueError("efficiencies must lie in [0, 1]")
    if not (gamma0 > 0 and gamma >= gamma0):
        raise ValueError("need gamma >= gamma0 > 0")
    return beta_dipole * debye_waller * (gamma0 / gamma) * eta_taper * 10.0 ** (-extra_loss_db / 10.0)


def write_assembly_csv(result: AssemblyResult, budget, path) -> None:
    budget = np.broadcast_to(np.asarray(budget, dtype=float), result.placed.shape)
    e602 = result.eta.get(602.0, np.zeros(len(result)))
    e737 = result.eta.get(737.0, np.zeros(len(result)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSEMBLY_COLUMNS)
        for i in range(len(result)):
            off = "" if not result.placed[i] else repr(float(result.offset_nm[i]))
            w.writerow([i, int(result.placed[i]), off, repr(float(e602[i])), repr(float(e737[i])),
                        repr(float(budget[i]))])


def read_assembly_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"socket_id": int(r["socket_id"]), "placed": bool(int(r["placed"])),
             "offset_nm": float(r["offset_nm"]) if r["offset_nm"] else math.nan,
             "eta_602": float(r["eta_602"]), "eta_737": float(r["eta_737"]),
             "budget": float(r["budget"])}
            for r in csv.DictReader(fh)
        ]
