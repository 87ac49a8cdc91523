"""Electrostatic strain tuning: crossing voltages and resonant emitter sets.

Each emitter's ZPL moves one way with actuator voltage, ``f0 + sign(k) min(|k| V^2, cap)``,
so over ``[0, v_max]`` it sweeps a closed interval of reachable frequencies. Emitters
whose intervals share a point can be brought into mutual resonance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .emitters import FWHM_PER_SIGMA, Emitter, SpeciesParams, sample_offsets, sample_strain_coeffs
from .rng import block_bounds, map_ordered, substream

PLAN_COLUMNS = ["emitter_id", "f0_ghz", "k", "voltage", "f_target_ghz"]
COVERAGE_COLUMNS = ["species", "cap_ghz", "v_max", "trials", "coverage", "stderr"]
COVERAGE_BLOCK = 65536


class NoCrossing(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class ActuatorConfig:
    v_max: float = 100.0
    cap_ghz: float = 100.0
    electrode_gap_um: float = 1.5

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if self.cap_ghz < 0:
            raise ValueError("cap_ghz must be non-negative")


@dataclass(frozen=True)
class TuningPlan:
    target_freq_ghz: float
    members: tuple[tuple[int, float], ...]

    @property
    def size(self) -> int:
        return len(self.members)

    def verify(self, emitters: list[Emitter], actuator: ActuatorConfig, atol: float = 1e-6) -> None:
        for i, v in self.members:
            if not 0 <= v <= actuator.v_max:
                raise AssertionError(f"emitter {i}: voltage {v} outside [0, {actuator.v_max}]")
            e = emitters[i]
            f = strained_frequency(e.zpl_offset_ghz, e.strain_coeff_ghz_per_v2, v, actuator.cap_ghz)
            if abs(f - self.target_freq_ghz) > atol:
                raise AssertionError(f"emitter {i}: {f} GHz misses target {self.target_freq_ghz} GHz")


def strained_frequency(f0_ghz: float, k_ghz_per_v2: float, v: float, cap_ghz: float) -> float:
    if v < 0:
        raise ValueError("voltage must be non-negative")
    if k_ghz_per_v2 == 0:
        return f0_ghz
    return f0_ghz + math.copysign(min(abs(k_ghz_per_v2) * v * v, cap_ghz), k_ghz_per_v2)


def crossing_voltage(e_i: Emitter, e_j: Emitter, actuator: ActuatorConfig) -> float:
    """Voltage at which two emitters on one actuator share a frequency.

    Raises :class:`NoCrossing` with ``reason`` one of ``parallel``,
    ``diverging``, ``beyond_vmax`` or ``capped``.
    """
    fi, ki = e_i.zpl_offset_ghz, e_i.strain_coeff_ghz_per_v2
    fj, kj = e_j.zpl_offset_ghz, e_j.strain_coeff_ghz_per_v2
    if fi == fj:
        return 0.0
    if ki == kj:
        raise NoCrossing("parallel", "equal strain response with distinct frequencies")
    v2 = (fj - fi) / (ki - kj)
    if v2 < 0:
        raise NoCrossing("diverging", "the lines move apart with voltage")
    v = math.sqrt(v2)
    if v > actuator.v_max:
        raise NoCrossing("beyond_vmax", f"needs {v:.3f} V > {actuator.v_max} V")
    if max(abs(ki), abs(kj)) * v2 > actuator.cap_ghz:
        raise NoCrossing("capped", f"tuning saturates at {actuator.cap_ghz} GHz before {v:.3f} V")
    return v


def reachable_interval(emitter: Emitter, actuator: ActuatorConfig) -> tuple[float, float]:
    f0, k = emitter.zpl_offset_ghz, emitter.strain_coeff_ghz_per_v2
    end = strained_frequency(f0, k, actuator.v_max, actuator.cap_ghz)
    return (min(f0, end), max(f0, end))


def voltage_for(emitter: Emitter, target_ghz: float, actuator: ActuatorConfig) -> float:
    """Smallest voltage putting ``emitter`` at ``target_ghz`` (target assumed reachable)."""
    k = emitter.strain_coeff_ghz_per_v2
    delta = target_ghz - emitter.zpl_offset_ghz
    if delta == 0 or k == 0:
        return 0.0
    v = math.sqrt(max(delta / k, 0.0))
    return min(v, actuator.v_max)


def stab_max(intervals) -> tuple[float, int]:
    """Lowest point covered by the most closed intervals, by endpoint sweep."""
    events = []
    for lo, hi in intervals:
        events.append((lo, 0))
        events.append((hi, 1))
    # starts sort before ends at equal coordinates: touching closed intervals overlap
    events.sort()
    best, best_x, depth = 0, math.nan, 0
    for x, kind in events:
        if kind == 0:
            depth += 1
            if depth > best:
                best, best_x = depth, x
        else:
            depth -= 1
    return best_x, best


def max_mutually_resonant_set(emitters: list[Emitter], actuator: ActuatorConfig) -> TuningPlan:
    if not emitters:
        raise ValueError("need at least one emitter")
    iv = [reachable_interval(e, actuator) for e in emitters]
    target, _ = stab_max(iv)
    members = tuple((i, voltage_for(e, target, actuator))
                    for i, (e, (lo, hi)) in enumerate(zip(emitters, iv)) if lo <= target <= hi)
    plan = TuningPlan(target, members)
    plan.verify(emitters, actuator)
    return plan


def intervals_intersect(a, b) -> bool:
    return max(a[0], b[0]) <= min(a[1], b[1])


def max_resonant_pairs(emitters: list[Emitter], actuator: ActuatorConfig) -> list[tuple[int, int]]:
    """Maximum set of disjoint emitter pairs that can each be brought into resonance."""
    if not emitters:
        raise ValueError("need at least one emitter")
    iv = [reachable_interval(e, actuator) for e in emitters]
    g = nx.Graph()
    g.add_nodes_from(range(len(iv)))
    g.add_edges_from((i, j) for i in range(len(iv)) for j in range(i + 1, len(iv))
                     if intervals_intersect(iv[i], iv[j]))
    matching = nx.max_weight_matching(g, maxcardinality=True)
    return sorted(tuple(sorted(p)) for p in matching)


def sample_inhomogeneous(species: SpeciesParams, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return sample_offsets(species, n, substream(seed, "inhom"))


def empirical_fwhm(samples) -> float:
    """FWHM of a Gaussian with the sample's standard deviation."""
    return FWHM_PER_SIGMA * float(np.std(samples, ddof=1))


def _pair_block(species, actuator, seed, b, n):
    rng = substream(seed, "coverage", b)
    f = sample_offsets(species, 2 * n, rng).reshape(n, 2)
    k = sample_strain_coeffs(2 * n, rng).reshape(n, 2)
    shift = np.sign(k) * np.minimum(np.abs(k) * actuator.v_max**2, actuator.cap_ghz)
    end = f + shift
    lo, hi = np.minimum(f, end), np.maximum(f, end)
    return int(np.count_nonzero(np.maximum(lo[:, 0], lo[:, 1]) <= np.minimum(hi[:, 0], hi[:, 1])))


def pair_coverage(species: SpeciesParams, actuator: ActuatorConfig, trials: int, seed: int,
                  workers: int = 1) -> tuple[float, float]:
    """Probability that two random emitters on one actuator can be tuned into resonance."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    bounds = block_bounds(trials, COVERAGE_BLOCK)
    hits = sum(map_ordered(lambda b: _pair_block(species, actuator, seed, b, bounds[b][1] - bounds[b][0]),
                           range(len(bounds)), workers))
    p = hits / trials
    return p, math.sqrt(p * (1 - p) / trials)


def write_plan_csv(plan: TuningPlan, emitters: list[Emitter], path, ids=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAN_COLUMNS)
        for i, v in plan.members:
            e = emitters[i]
            w.writerow([ids[i] if ids is not None else i, repr(e.zpl_offset_ghz),
                        repr(e.strain_coeff_ghz_per_v2), repr(v), repr(plan.target_freq_ghz)])


def write_coverage_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COVERAGE_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in COVERAGE_COLUMNS])
