"""Exhaustive reference solutions for the tuning optimisers (small n only)."""

from __future__ import annotations

import numpy as np

from .emitters import GEV, Emitter
from .tuning import ActuatorConfig, intervals_intersect, reachable_interval


def brute_force_stab(intervals) -> tuple[float, int]:
    """Try every endpoint; return the lowest one covered by the most intervals."""
    best_x, best = None, 0
    for x in sorted({v for iv in intervals for v in iv}):
        n = sum(lo <= x <= hi for lo, hi in intervals)
        if n > best:
            best_x, best = x, n
    return best_x, best


def brute_force_matching_size(n: int, edges) -> int:
    adj = {i: set() for i in range(n)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)

    def best(free: frozenset) -> int:
        if not free:
            return 0
        v = min(free)
        rest = free - {v}
        out = best(rest)
        for u in adj[v] & rest:
            out = max(out, 1 + best(rest - {u}))
        return out

    return best(frozenset(range(n)))


def interval_edges(emitters, actuator: ActuatorConfig):
    iv = [reachable_interval(e, actuator) for e in emitters]
    return [(i, j) for i in range(len(iv)) for j in range(i + 1, len(iv))
            if intervals_intersect(iv[i], iv[j])]


def random_instance(rng: np.random.Generator, n_max: int = 10):
    """Emitters on a coarse frequency grid so endpoints often coincide."""
    n = int(rng.integers(1, n_max + 1))
    actuator = ActuatorConfig(v_max=float(rng.choice([10.0, 30.0, 60.0])),
                              cap_ghz=float(rng.choice([5.0, 20.0, 100.0])))
    emitters = []
    for _ in range(n):
        f = float(rng.integers(-30, 31))
        k = float(rng.choice([-1, 0, 1]) * rng.choice([0.005, 0.01, 0.02, 0.05]))
        emitters.append(Emitter(GEV, zpl_offset_ghz=f, strain_coeff_ghz_per_v2=k))
    return emitters, actuator
