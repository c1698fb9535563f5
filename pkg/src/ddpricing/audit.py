"""Consumer payoffs, incentive-compatibility audits and equilibrium checks."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .population import ConsumerType, Population, aggregate_truthful
from .pricing import PriceMenu, cost_from_scenarios, grad_check_scenarios, menu_from_scenarios
from .scheduler import delivery_fractions_batch
from .supply import MarketConfig, ScenarioSet, SupplyModel, rng_for, scenario_set

EXACT_SLACK = 1e-9
BOUND_TOL = 1e-12
_SCEN_CHUNK = 4096
_CELL_BUDGET = 1 << 22


def truthful_payoff(t: ConsumerType, menu: PriceMenu) -> float:
    """Deterministic payoff of truth-telling: ``U(q) - p_k q``."""
    if t.q == 0:
        return 0.0
    return float(t.utility_at(t.q)) - float(menu.p[t.deadline - 1]) * t.q


def _expect(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted mean along the last axis; constant rows come back unchanged."""
    const = np.all(values == values[..., :1], axis=-1)
    mean = values @ w / np.sum(w)
    return np.where(const, values[..., 0], mean)


@dataclass
class ProbeEvaluation:
    payoff: np.ndarray  # (G,)
    stderr: np.ndarray  # (G,)
    bound_violations: int


def evaluate_actions(t: ConsumerType, actions, x, sc: ScenarioSet, menu: PriceMenu,
                     check_bounds: bool = True) -> ProbeEvaluation:
    """Expected payoff of a zero-mass probe of type ``t`` for each action row.

    The bundle ``x`` and the menu stay fixed; deliveries follow EDF with
    proportional sharing inside each class.
    """
    A = np.atleast_2d(np.asarray(actions, dtype=float))
    k = t.deadline
    util = np.empty((A.shape[0], sc.size))
    violations = 0
    chunk = max(1, min(_SCEN_CHUNK, _CELL_BUDGET // (A.shape[0] * (A.shape[1] + 1))))
    for lo in range(0, sc.size, chunk):
        paths = sc.paths[lo:lo + chunk]
        F = delivery_fractions_batch(x, paths)  # (m, class, k)
        if check_bounds:
            omega_all = np.tensordot(A, F, axes=(1, 1))[:, :, 1:]
            lower = np.cumsum(A, axis=1)[:, None, :]
            upper = A.sum(axis=1)[:, None, None]
            violations += int(np.count_nonzero((omega_all < lower - BOUND_TOL) | (omega_all > upper + BOUND_TOL)))
            omega = omega_all[:, :, k - 1]
        else:
            omega = A @ F[:, :, k].T
        util[:, lo:lo + len(paths)] = t.utility_at(omega)
    eu = _expect(util, sc.weights)
    if sc.exact:
        se = np.zeros(A.shape[0])
    else:
        se = np.std(util, axis=1, ddof=1) / np.sqrt(sc.size) if sc.size > 1 else np.full(A.shape[0], np.inf)
        se = np.where(np.all(util == util[:, :1], axis=1), 0.0, se)
    pay = A @ menu.p
    return ProbeEvaluation(eu - pay, se, violations)


@dataclass
class PayoffEstimate:
    value: float
    stderr: float
    inconclusive: bool = False


def deviation_payoff(t: ConsumerType, a, x, model: SupplyModel, cfg: MarketConfig,
                     samples: int | None = None, seed: int = 0, method: str = "auto",
                     max_stderr: float | None = None, menu: PriceMenu | None = None) -> PayoffEstimate:
    sc = scenario_set(model, cfg.N, samples, seed, method)
    if menu is None:
        menu = menu_from_scenarios(x, sc, cfg.c0, model.assumption2)
    ev = evaluate_actions(t, [a], x, sc, menu)
    se = float(ev.stderr[0])
    return PayoffEstimate(float(ev.payoff[0]), se, max_stderr is not None and se > max_stderr)


def deviation_grid(t: ConsumerType, horizon: int, G: int = 8, qmax: float | None = None) -> np.ndarray:
    """Every action with entries in ``{0, q/G, ..., q}`` and total ``<= qmax``."""
    qmax = t.q if qmax is None else qmax
    steps = np.arange(G + 1) * (t.q / G)
    grid = np.array(list(itertools.product(steps, repeat=horizon)), dtype=float)
    return grid[grid.sum(axis=1) <= qmax * (1 + 1e-12)]


@dataclass
class PayoffReport:
    deadline: int
    R: float
    q: float
    x: list[float]
    truthful_payoff: float
    best_deviation: list[float]
    best_deviation_payoff: float
    gap: float
    stderr: float
    slack: float
    ok: bool
    grid: dict
    bound_violations: int
    qualifies: bool  # R >= c0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def ic_audit_scenarios(t: ConsumerType, x, sc: ScenarioSet, menu: PriceMenu, c0: float,
                       G: int = 8, qmax: float | None = None) -> PayoffReport:
    n = len(menu.p)
    grid = deviation_grid(t, n, G, qmax)
    ev = evaluate_actions(t, grid, x, sc, menu)
    truth = truthful_payoff(t, menu)
    i = int(np.argmax(ev.payoff))
    best = float(ev.payoff[i])
    se = float(ev.stderr[i])
    slack = EXACT_SLACK if sc.exact else max(EXACT_SLACK, 3.0 * se)
    gap = truth - best
    return PayoffReport(
        deadline=t.deadline, R=t.R, q=t.q, x=[float(v) for v in x], truthful_payoff=truth,
        best_deviation=[float(v) for v in grid[i]], best_deviation_payoff=best, gap=gap,
        stderr=se, slack=slack, ok=bool(gap >= -slack),
        grid={"G": G, "qmax": float(t.q if qmax is None else qmax), "actions": int(len(grid))},
        bound_violations=ev.bound_violations, qualifies=bool(t.R >= c0))


def ic_audit(t: ConsumerType, x, model: SupplyModel, cfg: MarketConfig, G: int = 8,
             samples: int | None = None, seed: int = 0, method: str = "auto",
             qmax: float | None = None) -> PayoffReport:
    """Exhaustive grid search for a profitable deviation from truth-telling
    at a fixed aggregate bundle ``x``."""
    sc = scenario_set(model, cfg.N, samples, seed, method)
    menu = menu_from_scenarios(x, sc, cfg.c0, model.assumption2)
    return ic_audit_scenarios(t, x, sc, menu, cfg.c0, G, qmax)


def sample_bundles(x_star, n_random: int, seed: int, scale: float | None = None) -> list[np.ndarray]:
    """Audit bundles: the truthful one, random ones and single-deadline ones."""
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.size
    total = float(x_star.sum()) or 1.0
    scale = 2.0 * total / n if scale is None else scale
    rng = rng_for(seed, 2)
    xs = [x_star.copy()]
    xs += [rng.uniform(0.0, scale, n) for _ in range(n_random)]
    xs += [np.eye(n)[j] * total for j in range(n)]
    return xs


def ic_sweep(pop: Population, xs, sc: ScenarioSet, cfg: MarketConfig, G: int = 8,
             assumption2: bool = False, workers: int = 1) -> list[PayoffReport]:
    """Audit every entry type and probe at every bundle in ``xs``.

    Reports come back in (bundle, member) order for any ``workers``.
    """
    members = [t for t, _ in pop.entries] + [t for t, _ in pop.probes]
    qmax = pop.max_demand()
    menus = [menu_from_scenarios(x, sc, cfg.c0, assumption2) for x in xs]
    jobs = [(x, menu, t) for x, menu in zip(xs, menus) for t in members]

    def run(job):
        x, menu, t = job
        return ic_audit_scenarios(t, x, sc, menu, cfg.c0, G, qmax)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, jobs))
    return [run(j) for j in jobs]


def _served(pop: Population, x, x_star) -> list[float]:
    # each class is shared among its types in proportion to truthful requests
    x = np.asarray(x, dtype=float)
    out = []
    for t, _ in pop.entries:
        j = t.deadline - 1
        frac = min(1.0, x[j] / x_star[j]) if x_star[j] > 0 else 0.0
        out.append(t.q * frac)
    return out


def welfare_from_scenarios(pop: Population, x, sc: ScenarioSet, c0: float) -> tuple[float, float]:
    x_star = aggregate_truthful(pop, len(np.atleast_1d(x)))
    utility = sum(m * float(t.utility_at(y)) for (t, m), y in zip(pop.entries, _served(pop, x, x_star)))
    cost = cost_from_scenarios(x, sc, c0)
    return utility - cost.value, cost.stderr


def social_welfare(pop: Population, x, model: SupplyModel, cfg: MarketConfig,
                   samples: int | None = None, seed: int = 0, method: str = "auto") -> float:
    """Utility of the energy served to truthful types minus expected firm cost."""
    sc = scenario_set(model, cfg.N, samples, seed, method)
    return welfare_from_scenarios(pop, x, sc, cfg.c0)[0]


def welfare_perturbations(pop: Population, sc: ScenarioSet, c0: float,
                          factors=(-0.5, -0.25, 0.25, 0.5)) -> dict:
    """Welfare at the truthful bundle against joint per-coordinate rescalings."""
    n = sc.paths.shape[1]
    x_star = aggregate_truthful(pop, n)
    w_star, _ = welfare_from_scenarios(pop, x_star, sc, c0)
    rows = []
    for combo in itertools.product(factors, repeat=n):
        x = x_star * (1.0 + np.asarray(combo))
        w, _ = welfare_from_scenarios(pop, x, sc, c0)
        rows.append({"x": [float(v) for v in x], "welfare": w, "margin": w_star - w})
    margin = min((r["margin"] for r in rows), default=0.0)
    return {"x_star": [float(v) for v in x_star], "welfare_star": w_star,
            "perturbations": rows, "min_margin": margin}


@dataclass
class EquilibriumReport:
    x_star: list[float]
    menu: PriceMenu
    welfare: float
    welfare_stderr: float
    utility_total: float
    expected_cost: float
    foc_residual: float
    foc_slack: float
    gradient: list[float]
    ic_summary: list[dict] = field(default_factory=list)
    advisory: bool = False
    ok: bool = True
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["menu"] = self.menu.to_dict()
        return d


def _foc_gradient(x_star, sc: ScenarioSet, c0: float, menu: PriceMenu) -> np.ndarray:
    """Gradient of the expected cost closest to the menu among the one-sided
    finite differences (they coincide where the cost is smooth)."""
    h = (1e-4 if sc.exact else 1e-2) * np.maximum(x_star, 1.0)
    h = np.where(x_star > 0, np.minimum(h, x_star), h)
    report = grad_check_scenarios(np.where(x_star > 0, x_star, 0.0), sc, c0, h)
    g = np.zeros_like(x_star)
    for k, r in enumerate(report):
        if r.skipped is None:
            lo, hi = sorted((r.left, r.right))
            g[k] = min(max(menu.p[k], lo), hi)
        else:
            e = np.zeros_like(x_star)
            e[k] = h[k]
            up = cost_from_scenarios(x_star + e, sc, c0).value
            base = cost_from_scenarios(x_star, sc, c0).value
            g[k] = (up - base) / h[k]
    return g


def equilibrium_check(pop: Population, model: SupplyModel, cfg: MarketConfig,
                      samples: int | None = None, seed: int = 0, method: str = "auto", G: int = 8,
                      n_random_x: int = 0, n_directions: int = 32, workers: int = 1) -> EquilibriumReport:
    sc = scenario_set(model, cfg.N, samples, seed, method, workers)
    n = cfg.N
    notes = []
    advisory = any(t.R < cfg.c0 for t, _ in pop.entries)
    if advisory:
        notes.append("some type has R < c0; report is advisory")
    x_star = aggregate_truthful(pop, n)
    menu = menu_from_scenarios(x_star, sc, cfg.c0, model.assumption2)

    xs = sample_bundles(x_star, n_random_x, seed) if n_random_x else [x_star]
    audits = ic_sweep(pop, xs, sc, cfg, G, model.assumption2, workers)
    ic_ok = all(r.ok and r.bound_violations == 0 for r in audits if r.qualifies)

    g = _foc_gradient(x_star, sc, cfg.c0, menu)
    diff = menu.p - g
    rng = rng_for(seed, 3)
    hi = 2.0 * float(np.max(x_star, initial=0.0)) + 1.0
    ys = [np.zeros(n), 2.0 * x_star] + [rng.uniform(0.0, hi, n) for _ in range(n_directions)]
    worst = min(float(diff @ (x_star - y)) for y in ys)
    foc_residual = max(0.0, -worst)
    spread = max(float(np.abs(x_star - y).sum()) for y in ys)
    foc_slack = EXACT_SLACK if sc.exact else max(EXACT_SLACK, 3.0 * float(np.max(menu.stderr)) * spread)

    cost = cost_from_scenarios(x_star, sc, cfg.c0)
    utility_total = sum(m * float(t.utility_at(t.q)) for t, m in pop.entries)
    welfare, wse = welfare_from_scenarios(pop, x_star, sc, cfg.c0)
    welfare_ok = abs(welfare - (utility_total - cost.value)) <= max(EXACT_SLACK, 3.0 * cost.stderr)
    ok = ic_ok and foc_residual <= foc_slack and welfare_ok
    return EquilibriumReport(
        x_star=[float(v) for v in x_star], menu=menu, welfare=welfare, welfare_stderr=wse,
        utility_total=utility_total, expected_cost=cost.value, foc_residual=foc_residual,
        foc_slack=foc_slack, gradient=[float(v) for v in g],
        ic_summary=[r.to_dict() for r in audits], advisory=advisory, ok=bool(ok), notes=notes)


def search_ic_violation(trials: int = 200, seed: int = 0, c0: float = 1.0, max_horizon: int = 3,
                        R_range=(0.2, 0.99), G: int = 4, levels: int = 5) -> dict:
    """Random search for an instance where truth-telling is not optimal.

    Types are drawn with ``R`` in ``R_range * c0``. Returns the first
    violating instance, or an inconclusive result when none is found.
    """
    from .oracle import random_discrete_instance

    rng = rng_for(seed, 4)
    for i in range(trials):
        x, scenarios = random_discrete_instance(rng, max_horizon, levels)
        n = len(x)
        R = float(rng.uniform(*R_range)) * c0
        t = ConsumerType(int(rng.integers(1, n + 1)), R, float(rng.integers(1, levels)))
        paths = np.array([p for p, _ in scenarios])
        probs = np.array([w for _, w in scenarios])
        sc = ScenarioSet(paths, probs, True)
        menu = menu_from_scenarios(x, sc, c0)
        rep = ic_audit_scenarios(t, x, sc, menu, c0, G)
        if not rep.ok:
            return {"found": True, "trial": i, "report": rep.to_dict(),
                    "scenarios": [{"path": [float(s) for s in p], "prob": float(w)} for p, w in scenarios]}
    return {"found": False, "trials": trials, "status": "inconclusive"}
