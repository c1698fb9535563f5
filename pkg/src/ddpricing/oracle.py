"""Exhaustive dynamic programming over causal allocation policies.

Used as an independent check that EDF attains the minimum expected firm
cost. Quantities are discretized to integer multiples of ``unit`` and every
feasible integer allocation (intermittent and firm, to any open class) is
searched at every node of the scenario tree. The tree DP optimizes over all
non-anticipative policies, a superset of the Markov policies, so EDF
matching it is the stronger statement.
"""
from __future__ import annotations

import functools
import itertools
from collections import defaultdict

import numpy as np

from .errors import ParameterError
from .pricing import cost_from_scenarios
from .supply import ScenarioSet


def _as_units(values, unit: float) -> tuple[int, ...]:
    arr = np.asarray(values, dtype=float) / unit
    ints = np.rint(arr)
    if np.any(np.abs(arr - ints) > 1e-9):
        raise ParameterError(f"values {np.asarray(values).tolist()} are not multiples of unit {unit}")
    return tuple(int(i) for i in ints)


def _splits(total_cap: int, caps: tuple[int, ...]):
    """All integer vectors ``0 <= u <= caps`` with ``sum(u) <= total_cap``."""
    if not caps:
        yield ()
        return
    for first in range(min(caps[0], total_cap) + 1):
        for rest in _splits(total_cap - first, caps[1:]):
            yield (first,) + rest


def optimal_causal_cost(x, scenarios, c0: float, unit: float = 1.0) -> float:
    """Minimum expected firm cost over all causal integer policies.

    ``scenarios`` is a list of ``(path, probability)``.
    """
    xz = _as_units(x, unit)
    n = len(xz)
    tree: list[tuple[tuple[int, ...], float]] = [(_as_units(p, unit), float(w)) for p, w in scenarios]
    if any(len(p) != n for p, _ in tree):
        raise ParameterError("scenario length differs from bundle length")

    children: dict[tuple[int, ...], dict[int, float]] = defaultdict(lambda: defaultdict(float))
    for path, w in tree:
        for k in range(n):
            children[path[:k]][path[k]] += w

    @functools.lru_cache(maxsize=None)
    def expected(k: int, prefix: tuple[int, ...], z: tuple[int, ...]) -> float:
        if k == n:
            return 0.0
        branch = children[prefix]
        total = sum(branch.values())
        if total <= 0:
            return 0.0
        return sum(w / total * decide(k, prefix + (s,), z, s) for s, w in sorted(branch.items()))

    @functools.lru_cache(maxsize=None)
    def decide(k: int, prefix: tuple[int, ...], z: tuple[int, ...], s: int) -> float:
        best = np.inf
        open_caps = z[k:]
        for u_open in _splits(s, open_caps):
            rem = tuple(zz - uu for zz, uu in zip(open_caps, u_open))
            # the class due now must be closed; firm may also pre-serve later classes
            ranges = [range(rem[0], rem[0] + 1)] + [range(r + 1) for r in rem[1:]]
            for v_open in itertools.product(*ranges):
                nz = z[:k] + tuple(r - vv for r, vv in zip(rem, v_open))
                cost = c0 * unit * sum(v_open) + expected(k + 1, prefix, nz)
                if cost < best:
                    best = cost
        return float(best)

    return expected(0, (), xz)


def edf_vs_oracle(x, scenarios, c0: float, unit: float = 1.0, tol: float = 1e-9) -> dict:
    paths = np.array([p for p, _ in scenarios], dtype=float)
    probs = np.array([w for _, w in scenarios], dtype=float)
    edf = cost_from_scenarios(x, ScenarioSet(paths, probs, True), c0).value
    best = optimal_causal_cost(x, scenarios, c0, unit)
    return {"x": [float(v) for v in x], "edf_cost": edf, "oracle_cost": best,
            "gap": edf - best, "tol": tol, "pass": bool(edf <= best + tol)}


def random_discrete_instance(rng: np.random.Generator, max_horizon: int = 3, levels: int = 5,
                             max_scenarios: int = 6) -> tuple[np.ndarray, list]:
    """Random small instance on the integer grid ``{0, ..., levels-1}``."""
    n = int(rng.integers(1, max_horizon + 1))
    x = rng.integers(0, levels, size=n).astype(float)
    if rng.random() < 0.5:
        # independent periods: full product distribution
        supports = [np.unique(rng.integers(0, levels, size=int(rng.integers(1, 3)))) for _ in range(n)]
        weights = [rng.dirichlet(np.ones(len(s))) for s in supports]
        scenarios = []
        for combo in itertools.product(*[range(len(s)) for s in supports]):
            p = float(np.prod([weights[t][i] for t, i in enumerate(combo)]))
            scenarios.append((np.array([supports[t][i] for t, i in enumerate(combo)], dtype=float), p))
    else:
        m = int(rng.integers(1, max_scenarios + 1))
        w = rng.dirichlet(np.ones(m))
        scenarios = [(rng.integers(0, levels, size=n).astype(float), float(wi)) for wi in w]
    return x, scenarios
