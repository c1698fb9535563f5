"""Consumer types, utilities, actions and demand aggregation.

A nonatomic population is approximated by finitely many ``(type, mass)``
atoms. Zero-mass probe consumers ride along for incentive audits and never
enter the aggregate bundle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

FAMILIES = ("capped-linear", "step", "staircase", "tabulated-piecewise-linear")

# deliveries are sums of service fractions; absorb round-off at utility jumps
JUMP_SLACK = 1e-12
CAP_GRID_POINTS = 1001
MASS_TOL = 1e-12


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)
    flags: dict[str, Any] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class UtilitySpec:
    """Utility family plus its breakpoint parameters.

    ``staircase`` takes ``{"steps": [[y, U], ...]}`` (value ``U`` from ``y``
    onwards, zero before the first step); ``tabulated-piecewise-linear`` takes
    ``{"points": [[y, U], ...]}`` from ``y = 0`` to ``y = q``. ``capped-linear``
    and ``step`` are fully described by the type's ``R`` and ``q``.
    """

    family: str = "capped-linear"
    params: Mapping[str, Any] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class ConsumerType:
    deadline: int
    R: float
    q: float
    utility: UtilitySpec = field(default_factory=UtilitySpec)

    def utility_at(self, y):
        """Vectorized utility, no domain checks (negative inputs read as 0)."""
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        fam = self.utility.family
        q = float(self.q)
        if fam == "capped-linear":
            return self.R * np.minimum(y, q)
        if fam == "step":
            return np.where(y + JUMP_SLACK * max(1.0, q) >= q, self.R * q, 0.0)
        if fam == "staircase":
            ys, us = _table(self.utility.params, "steps")
            idx = np.searchsorted(ys, y + JUMP_SLACK * max(1.0, q), side="right")
            vals = np.concatenate(([0.0], us))
            out = vals[idx]
            # constant beyond q
            cap = vals[np.searchsorted(ys, q + JUMP_SLACK * max(1.0, q), side="right")]
            return np.where(y >= q, cap, out)
        if fam == "tabulated-piecewise-linear":
            ys, us = _table(self.utility.params, "points")
            return np.interp(np.minimum(y, q), ys, us)
        raise DomainError(f"unknown utility family {fam!r}")

    def breakpoints(self) -> np.ndarray:
        fam = self.utility.family
        if fam in ("staircase", "tabulated-piecewise-linear"):
            key = "steps" if fam == "staircase" else "points"
            ys, _ = _table(self.utility.params, key)
            return ys[(ys >= 0) & (ys <= self.q)]
        return np.array([0.0, self.q])


def _table(params: Mapping[str, Any], key: str) -> tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(params.get(key, []), dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 2 or len(rows) == 0:
        raise DomainError(f"utility parameter {key!r} must be a non-empty list of [y, U] pairs")
    return rows[:, 0], rows[:, 1]


def _table_violations(t: ConsumerType) -> list[str]:
    fam = t.utility.family
    if fam not in FAMILIES:
        return [f"unknown utility family {fam!r}"]
    if fam in ("capped-linear", "step"):
        return []
    key = "steps" if fam == "staircase" else "points"
    try:
        ys, us = _table(t.utility.params, key)
    except (DomainError, ValueError, TypeError) as exc:
        return [f"malformed utility parameters: {exc}"]
    out = []
    if np.any(np.diff(ys) <= 0):
        out.append(f"{key} abscissae must be strictly increasing")
    if not np.all(np.isfinite(ys)) or not np.all(np.isfinite(us)):
        out.append(f"{key} must be finite")
    if fam == "tabulated-piecewise-linear" and not out:
        if ys[0] != 0.0:
            out.append("points must start at y = 0")
        if not np.isclose(ys[-1], t.q, rtol=1e-12, atol=0.0):
            out.append("points must end at y = q")
    if fam == "staircase" and not out and ys[0] <= 0.0:
        out.append("steps must start at y > 0")
    return out


def validate_type(t: ConsumerType, horizon: int | None = None) -> ValidationResult:
    """Check a type against the utility assumptions.

    The cap ``U(y) <= y R`` and monotonicity are checked on a uniform grid
    of ``CAP_GRID_POINTS`` points over ``[0, q]`` plus every breakpoint.
    """
    v: list[str] = []
    if int(t.deadline) != t.deadline or t.deadline < 1:
        v.append(f"deadline must be an integer >= 1, got {t.deadline}")
    elif horizon is not None and t.deadline > horizon:
        v.append(f"deadline {t.deadline} exceeds horizon N={horizon}")
    if not t.q > 0:
        v.append(f"max demand q must be > 0, got {t.q}")
    if not t.R > 0:
        v.append(f"marginal utility R must be > 0, got {t.R}")
    table = _table_violations(t)
    v.extend(table)
    if v:
        return ValidationResult(False, v)

    q, R = float(t.q), float(t.R)
    grid = np.union1d(np.linspace(0.0, q, CAP_GRID_POINTS), t.breakpoints())
    vals = t.utility_at(grid)
    uq = float(t.utility_at(q))
    tol = 1e-9 * max(1.0, R * q)
    if vals[0] < 0:
        v.append(f"U(0) = {vals[0]} is negative")
    if np.any(np.diff(vals) < -tol):
        i = int(np.argmax(np.diff(vals) < -tol))
        v.append(f"U is decreasing near y = {grid[i + 1]:.6g}")
    over = vals - grid * R
    if np.any(over > tol):
        i = int(np.argmax(over))
        v.append(f"cap U(y) <= yR violated at y = {grid[i]:.6g}: U = {vals[i]:.6g} > {grid[i] * R:.6g}")
    if abs(uq - R * q) > tol:
        v.append(f"R must equal U(q)/q: U(q)/q = {uq / q:.12g}, R = {R:.12g}")
    beyond = t.utility_at(np.array([q * 1.5, q * 10.0]))
    if np.any(np.abs(beyond - uq) > tol):
        v.append("U(y) must equal U(q) for y >= q")
    return ValidationResult(not v, v)


def utility_value(t: ConsumerType, y: float) -> float:
    if y < 0:
        raise DomainError(f"utility evaluated at negative energy {y}")
    return float(t.utility_at(y))


def truthful_action(t: ConsumerType, horizon: int) -> np.ndarray:
    a = np.zeros(horizon)
    a[t.deadline - 1] = t.q
    return a


@dataclass
class Population:
    """``entries`` are ``(type, mass)`` atoms; ``probes`` are ``(type, action)``
    with zero mass. A probe action of ``None`` means truthful."""

    entries: list[tuple[ConsumerType, float]] = field(default_factory=list)
    probes: list[tuple[ConsumerType, np.ndarray | None]] = field(default_factory=list)

    @property
    def types(self) -> list[ConsumerType]:
        return [t for t, _ in self.entries]

    @property
    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.entries], dtype=float)

    def max_demand(self) -> float:
        """Population-wide cap on total requested energy."""
        qs = [t.q for t, _ in self.entries] + [t.q for t, _ in self.probes]
        return float(max(qs)) if qs else 0.0

    def validate(self, horizon: int) -> ValidationResult:
        v: list[str] = []
        for i, (t, m) in enumerate(self.entries):
            if not m >= 0:
                v.append(f"types[{i}].mass must be >= 0, got {m}")
            v.extend(f"types[{i}]: {msg}" for msg in validate_type(t, horizon).violations)
        total = float(np.sum(self.masses)) if self.entries else 0.0
        if self.entries and abs(total - 1.0) > MASS_TOL:
            v.append(f"types[]: masses sum to {total:.15g}, expected 1")
        qmax = self.max_demand()
        for i, (t, a) in enumerate(self.probes):
            v.extend(f"probes[{i}]: {msg}" for msg in validate_type(t, horizon).violations)
            if a is not None:
                a = np.asarray(a, dtype=float)
                if a.shape != (horizon,):
                    v.append(f"probes[{i}].action must have length {horizon}")
                elif np.any(a < 0) or a.sum() > qmax * (1 + 1e-12):
                    v.append(f"probes[{i}].action must be nonnegative with total <= Q = {qmax}")
        return ValidationResult(not v, v)

    def probe_actions(self, horizon: int) -> list[np.ndarray]:
        return [truthful_action(t, horizon) if a is None else np.asarray(a, dtype=float)
                for t, a in self.probes]


def aggregate_truthful(pop: Population, horizon: int) -> np.ndarray:
    x = np.zeros(horizon)
    for t, m in pop.entries:
        x[t.deadline - 1] += m * t.q
    return x


def aggregate_actions(pop: Population, actions: Sequence, horizon: int) -> np.ndarray:
    if len(actions) != len(pop.entries):
        raise ShapeError(f"expected {len(pop.entries)} actions, got {len(actions)}")
    x = np.zeros(horizon)
    for i, ((_, m), a) in enumerate(zip(pop.entries, actions)):
        a = np.asarray(a, dtype=float)
        if a.shape != (horizon,):
            raise ShapeError(f"action {i} has shape {a.shape}, expected ({horizon},)")
        x += m * a
    return x


def action_is_feasible(a, qmax: float) -> bool:
    a = np.asarray(a, dtype=float)
    return bool(np.all(a >= 0) and a.sum() <= qmax * (1 + 1e-12))


def _type_from_dict(d: Mapping[str, Any], where: str, errors: list[str]) -> ConsumerType | None:
    missing = [k for k in ("deadline", "R", "q") if k not in d]
    if missing:
        errors.append(f"{where}: missing field(s) {', '.join(missing)}")
        return None
    util = d.get("utility") or {}
    if not isinstance(util, Mapping):
        errors.append(f"{where}.utility must be an object")
        return None
    try:
        return ConsumerType(
            deadline=int(d["deadline"]),
            R=float(d["R"]),
            q=float(d["q"]),
            utility=UtilitySpec(util.get("family", "capped-linear"), dict(util.get("params") or {})),
        )
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return None


def population_from_dict(types: Sequence[Mapping], probes: Sequence[Mapping] = (),
                         horizon: int | None = None) -> Population:
    """Build a population from parsed JSON, collecting every violation."""
    errors: list[str] = []
    pop = Population()
    for i, d in enumerate(types or []):
        t = _type_from_dict(d, f"types[{i}]", errors)
        if "mass" not in d:
            errors.append(f"types[{i}]: missing field mass")
            continue
        if t is not None:
            pop.entries.append((t, float(d["mass"])))
    for i, d in enumerate(probes or []):
        t = _type_from_dict(d, f"probes[{i}]", errors)
        if t is not None:
            a = d.get("action")
            pop.probes.append((t, None if a is None else np.asarray(a, dtype=float)))
    if horizon is not None and not errors:
        errors.extend(pop.validate(horizon).violations)
    if errors:
        raise ConfigError("invalid population", errors)
    return pop
