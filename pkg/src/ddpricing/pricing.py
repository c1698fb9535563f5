"""Expected firm-supply cost and marginal-cost deadline prices.

All estimators work on a :class:`~ddpricing.supply.ScenarioSet`, so exact
enumeration and Monte Carlo share one code path and every quantity derived
from the same set uses common random numbers.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError
from .scheduler import EPS, firm_cost_batch, residuals_batch
from .supply import MarketConfig, ScenarioSet, SupplyModel, rng_for, scenario_set


@dataclass
class CostEstimate:
    value: float
    stderr: float
    method: str
    samples: int


@dataclass
class PriceMenu:
    p: np.ndarray
    c0: float
    method: str
    samples: int
    stderr: np.ndarray
    assumption2: bool
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("p", "stderr", "x"):
            d[k] = [float(v) for v in d[k]]
        return d


def _method(sc: ScenarioSet) -> str:
    return "exact-enumeration" if sc.exact else "monte-carlo"


def cost_from_scenarios(x, sc: ScenarioSet, c0: float) -> CostEstimate:
    costs = firm_cost_batch(x, sc.paths, c0)
    if sc.exact:
        value = float(np.sum(sc.weights * costs) / np.sum(sc.weights))
        stderr = 0.0
    else:
        value = float(np.mean(costs))
        stderr = float(np.std(costs, ddof=1) / np.sqrt(sc.size)) if sc.size > 1 else float("inf")
    return CostEstimate(value, stderr, _method(sc), sc.size)


def _shortfall(x, sc: ScenarioSet) -> np.ndarray:
    # xi_t <= 0 is a shortfall (ties included); EPS absorbs round-off
    return residuals_batch(x, sc.paths)[:, 1:] <= EPS


def shortfall_ahead(x, sc: ScenarioSet) -> np.ndarray:
    """``A[m, k]``: some ``t >= k+1`` has a shortfall on path ``m``."""
    short = _shortfall(x, sc)
    return np.logical_or.accumulate(short[:, ::-1], axis=1)[:, ::-1]


def _prob(sc: ScenarioSet, mask: np.ndarray) -> np.ndarray:
    # masked sums over one fixed array keep nested events ordered exactly
    if sc.exact:
        # the normalizer rides along as an all-true column of the same reduction,
        # so a sure event comes out as exactly 1
        full = np.column_stack([mask, np.ones(len(mask), dtype=bool)])
        sums = np.sum(sc.weights[:, None] * full, axis=0)
        return sums[:-1] / sums[-1]
    return np.count_nonzero(mask, axis=0) / sc.size


def menu_from_scenarios(x, sc: ScenarioSet, c0: float, assumption2: bool = False) -> PriceMenu:
    x = np.asarray(x, dtype=float)
    prob = _prob(sc, shortfall_ahead(x, sc))
    p = c0 * prob
    if sc.exact:
        stderr = np.zeros_like(p)
    else:
        stderr = c0 * np.sqrt(prob * (1.0 - prob) / sc.size)
    return PriceMenu(p, float(c0), _method(sc), sc.size, stderr, bool(assumption2), x.copy())


def event_probabilities(x, sc: ScenarioSet) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint first-shortfall events.

    Returns ``(T, tail)`` where ``T[k, t]`` (``t >= k``) is the probability
    that, looking from deadline ``k+1``, the first shortfall happens at
    deadline ``t+1``, and ``tail[k]`` is the probability that no shortfall
    happens at any deadline ``>= k+1``.
    """
    short = _shortfall(x, sc)
    n = short.shape[1]
    T = np.zeros((n, n))
    tail = np.zeros(n)
    for k in range(n):
        clear = np.ones(short.shape[0], dtype=bool)
        for t in range(k, n):
            T[k, t] = _prob(sc, (clear & short[:, t])[:, None])[0]
            clear &= ~short[:, t]
        tail[k] = _prob(sc, clear[:, None])[0]
    return T, tail


def expected_firm_cost(x, model: SupplyModel, cfg: MarketConfig, samples: int | None = None,
                       seed: int = 0, method: str = "auto", workers: int = 1) -> CostEstimate:
    sc = scenario_set(model, cfg.N, samples, seed, method, workers)
    return cost_from_scenarios(x, sc, cfg.c0)


def price_menu(x, model: SupplyModel, cfg: MarketConfig, samples: int | None = None,
               seed: int = 0, method: str = "auto", workers: int = 1) -> PriceMenu:
    sc = scenario_set(model, cfg.N, samples, seed, method, workers)
    return menu_from_scenarios(x, sc, cfg.c0, model.assumption2)


@dataclass
class GradCoordinate:
    k: int
    price: float
    central: float | None
    left: float | None
    right: float | None
    abs_gap: float | None
    rel_gap: float | None
    skipped: str | None = None


def grad_check_scenarios(x, sc: ScenarioSet, c0: float, h) -> list[GradCoordinate]:
    x = np.asarray(x, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    if np.any(~(h > 0)):
        raise ParameterError("finite-difference step h must be > 0")
    menu = menu_from_scenarios(x, sc, c0)
    base = firm_cost_batch(x, sc.paths, c0)
    w = sc.weights / np.sum(sc.weights)
    report = []
    for k in range(x.size):
        pk = float(menu.p[k])
        if x[k] <= 0:
            report.append(GradCoordinate(k + 1, pk, None, None, None, None, None, "boundary coordinate x_k = 0"))
            continue
        if h[k] > x[k]:
            report.append(GradCoordinate(k + 1, pk, None, None, None, None, None, "step exceeds x_k"))
            continue
        e = np.zeros_like(x)
        e[k] = h[k]
        up = firm_cost_batch(x + e, sc.paths, c0)
        down = firm_cost_batch(x - e, sc.paths, c0)
        central = float(np.sum(w * (up - down)) / (2 * h[k]))
        right = float(np.sum(w * (up - base)) / h[k])
        left = float(np.sum(w * (base - down)) / h[k])
        gap = abs(central - pk)
        rel = gap / abs(pk) if pk != 0 else (0.0 if gap == 0 else float("inf"))
        report.append(GradCoordinate(k + 1, pk, central, left, right, gap, rel))
    return report


def grad_check(x, model: SupplyModel, cfg: MarketConfig, h, samples: int | None = None,
               seed: int = 0, method: str = "auto", workers: int = 1) -> list[GradCoordinate]:
    """Central differences of the expected firm cost against the price menu,
    evaluated with common random numbers."""
    if np.any(~(np.asarray(h, dtype=float) > 0)):
        raise ParameterError("finite-difference step h must be > 0")
    sc = scenario_set(model, cfg.N, samples, seed, method, workers)
    return grad_check_scenarios(x, sc, cfg.c0, h)


def convexity_probe(model: SupplyModel, cfg: MarketConfig, trials: int, seed: int = 0,
                    samples: int | None = None, method: str = "auto", low: float = 0.0,
                    high: float = 5.0, pairs=None, tol: float = 1e-9, workers: int = 1) -> dict:
    """Midpoint convexity of the expected firm cost on random bundle pairs."""
    if trials < 1 and pairs is None:
        raise ParameterError("trials must be >= 1")
    sc = scenario_set(model, cfg.N, samples, seed, method, workers)
    if pairs is None:
        rng = rng_for(seed, 1)
        pairs = [(rng.uniform(low, high, cfg.N), rng.uniform(low, high, cfg.N)) for _ in range(trials)]
    worst = -np.inf
    violations = 0
    for x1, x2 in pairs:
        x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
        mid = cost_from_scenarios(0.5 * x1 + 0.5 * x2, sc, cfg.c0).value
        chord = 0.5 * cost_from_scenarios(x1, sc, cfg.c0).value + 0.5 * cost_from_scenarios(x2, sc, cfg.c0).value
        excess = mid - chord
        worst = max(worst, excess)
        if excess > tol:
            violations += 1
    return {"trials": len(pairs), "violations": violations, "max_excess": float(worst),
            "tol": tol, "method": _method(sc), "samples": sc.size}
