"""Earliest-deadline-first scheduling of deadline classes.

Conventions: class ``j`` (1-based deadline) lives at array index ``j - 1``
and is served during periods ``0 .. j-1``; "delivered by deadline ``k``"
means cumulative delivery at the end of period ``k - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, InfeasibleStateError, ShapeError
from .population import Population, aggregate_actions

# absolute slack for round-off in residuals and surplus tests
EPS = 1e-12


def edf_controls(z, s: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """EDF allocation at period ``k`` for class residuals ``z`` and supply ``s``.

    Intermittent supply fills classes in deadline order; firm supply tops up
    only the class whose deadline falls at the end of this period.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    if s < 0:
        raise InfeasibleStateError(f"negative supply {s}")
    if np.any(z < -EPS) or np.any(z[:k] > EPS):
        raise InfeasibleStateError(f"state {z.tolist()} is not feasible at period {k}")
    z = np.maximum(z, 0.0)
    u = np.zeros(n)
    v = np.zeros(n)
    left = float(s)
    for j in range(n):
        u[j] = min(z[j], left)
        left -= u[j]
    if k < n:
        v[k] = z[k] - u[k]
    return u, v


@dataclass
class ScheduleTrace:
    x: np.ndarray
    path: np.ndarray
    z: np.ndarray  # (N+1, N), row t = residuals at the start of period t
    u: np.ndarray  # (N, N), row t = intermittent allocation in period t
    v: np.ndarray  # (N, N), row t = firm allocation in period t

    @property
    def horizon(self) -> int:
        return self.x.size

    def firm_by_class(self) -> np.ndarray:
        return self.v.sum(axis=0)

    def unused(self) -> np.ndarray:
        return self.path - self.u.sum(axis=1)


def _check_lengths(x, path) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    path = np.asarray(path, dtype=float)
    if x.ndim != 1 or path.shape[-1] != x.size:
        raise ShapeError(f"bundle length {x.size} and supply length {path.shape[-1]} differ")
    if np.any(x < 0):
        raise ShapeError("bundle entries must be nonnegative")
    return x, path


def simulate(x, path) -> ScheduleTrace:
    x, path = _check_lengths(x, path)
    n = x.size
    z = np.zeros((n + 1, n))
    u = np.zeros((n, n))
    v = np.zeros((n, n))
    z[0] = x
    for k in range(n):
        u[k], v[k] = edf_controls(z[k], path[k], k)
        z[k + 1] = np.maximum(z[k] - u[k] - v[k], 0.0)
    return ScheduleTrace(x, path, z, u, v)


def simulate_batch(x, paths) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized EDF over a batch of paths ``(M, N)``.

    Returns ``z (M, N+1, N)``, ``u (M, N, N)``, ``v (M, N, N)``.
    """
    x, paths = _check_lengths(x, np.atleast_2d(paths))
    m, n = paths.shape
    z = np.zeros((m, n + 1, n))
    u = np.zeros((m, n, n))
    v = np.zeros((m, n, n))
    z[:, 0, :] = x
    for k in range(n):
        left = paths[:, k].copy()
        for j in range(k, n):
            take = np.minimum(z[:, k, j], left)
            u[:, k, j] = take
            left -= take
        v[:, k, k] = z[:, k, k] - u[:, k, k]
        z[:, k + 1, :] = np.maximum(z[:, k, :] - u[:, k, :] - v[:, k, :], 0.0)
    return z, u, v


def residual_trace(x, path) -> np.ndarray:
    """Residual process ``xi`` of length ``N + 1`` with ``xi[0] = 0``."""
    x, path = _check_lengths(x, path)
    xi = np.zeros(x.size + 1)
    for k in range(x.size):
        xi[k + 1] = max(0.0, xi[k]) + path[k] - x[k]
    return xi


def residuals_batch(x, paths) -> np.ndarray:
    x, paths = _check_lengths(x, np.atleast_2d(paths))
    m, n = paths.shape
    xi = np.zeros((m, n + 1))
    for k in range(n):
        xi[:, k + 1] = np.maximum(0.0, xi[:, k]) + paths[:, k] - x[k]
    return xi


def firm_cost_batch(x, paths, c0: float) -> np.ndarray:
    """Per-path firm expenditure ``c0 * sum_k max(0, -xi_k)``."""
    xi = residuals_batch(x, paths)
    return c0 * np.maximum(0.0, -xi[:, 1:]).sum(axis=1)


def _snap(f: np.ndarray) -> np.ndarray:
    f = np.where(np.abs(f) <= EPS, 0.0, f)
    return np.where(np.abs(f - 1.0) <= EPS, 1.0, f)


def delivery_fractions_batch(x, paths, z=None) -> np.ndarray:
    """Cumulative served fraction of each class, per path.

    ``F[m, j, k]`` is the fraction of a class-``j+1`` request delivered by
    the end of period ``k - 1`` (so ``k = 0`` is always 0). Classes with
    positive mass share service proportionally; an empty class is treated as
    the limit of an infinitesimal request: it is served in the first period
    that leaves strictly positive surplus after all earlier-deadline
    residuals, or else at its deadline period.
    """
    x, paths = _check_lengths(x, np.atleast_2d(paths))
    if z is None:
        z, _, _ = simulate_batch(x, paths)
    m, n = paths.shape
    F = np.zeros((m, n, n + 1))
    for j in range(n):
        if x[j] > 0:
            F[:, j, :] = (x[j] - z[:, :, j]) / x[j]
        else:
            first = np.full(m, j)
            pending = np.ones(m, dtype=bool)
            for t in range(j):
                left = paths[:, t] - z[:, t, :j].sum(axis=1)
                hit = pending & (left > EPS)
                first[hit] = t
                pending &= ~hit
            F[:, j, :] = (np.arange(n + 1)[None, :] > first[:, None]).astype(float)
        F[:, j, j + 1:] = 1.0
    return _snap(F)


def delivery_fractions(trace: ScheduleTrace) -> np.ndarray:
    return delivery_fractions_batch(trace.x, trace.path[None, :], trace.z[None])[0]


def delivery_fractions_numeric(x, path, eps: float | None = None) -> np.ndarray:
    """Finite-epsilon cross-check of :func:`delivery_fractions` for empty classes."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if eps is None:
        eps = 1e-9 * max(float(np.max(x, initial=0.0)), 1.0)
    F = np.zeros((n, n + 1))
    for j in range(n):
        xa = x.copy()
        xa[j] += eps
        tr = simulate(xa, path)
        F[j] = (xa[j] - tr.z[:, j]) / xa[j]
    return F


@dataclass
class IntraAllocation:
    """Per-member deliveries ``lam[who][t, j]`` (period ``t``, class ``j+1``)."""

    trace: ScheduleTrace
    actions: dict[str, np.ndarray] = field(default_factory=dict)
    lam: dict[str, np.ndarray] = field(default_factory=dict)
    mass: dict[str, float] = field(default_factory=dict)


def intra_allocate(trace: ScheduleTrace, pop: Population, actions=None) -> IntraAllocation:
    """Proportional-to-request allocation inside each class.

    Members are named ``types[i]`` and ``probes[i]``. ``actions`` defaults to
    truthful reports for the entries; probes use their configured actions.
    """
    n = trace.horizon
    if actions is None:
        actions = [np.eye(n)[t.deadline - 1] * t.q for t, _ in pop.entries]
    x = aggregate_actions(pop, actions, n)
    if not np.allclose(x, trace.x, rtol=1e-9, atol=1e-12):
        raise ConsistencyError(f"actions aggregate to {x.tolist()}, trace serves {trace.x.tolist()}")
    F = delivery_fractions(trace)
    per_period = np.diff(F, axis=1).T  # (period, class)
    out = IntraAllocation(trace)
    members = [(f"types[{i}]", a, m) for i, ((_, m), a) in enumerate(zip(pop.entries, actions))]
    members += [(f"probes[{i}]", a, 0.0) for i, a in enumerate(pop.probe_actions(n))]
    for who, a, m in members:
        a = np.asarray(a, dtype=float)
        out.actions[who] = a
        out.lam[who] = per_period * a[None, :]
        out.mass[who] = float(m)
    return out


def consumer_delivery(alloc: IntraAllocation, who: str, k: int) -> float:
    if who not in alloc.lam:
        raise KeyError(f"unknown consumer {who!r}")
    n = alloc.trace.horizon
    if not 1 <= k <= n:
        raise ValueError(f"deadline {k} outside 1..{n}")
    return float(alloc.lam[who][:k].sum())


def delivery_bounds_ok(a, omega_by_deadline, tol: float = 1e-12) -> bool:
    """Check ``sum_{t<=k} a_t <= omega_k <= sum_t a_t`` for every ``k``."""
    a = np.asarray(a, dtype=float)
    omega = np.asarray(omega_by_deadline, dtype=float)
    lo = np.cumsum(a, axis=-1)
    hi = a.sum(axis=-1, keepdims=True)
    return bool(np.all(omega >= lo - tol) and np.all(omega <= hi + tol))


def trace_rows(trace: ScheduleTrace, scenario: int | None = None) -> list[dict]:
    rows = []
    n = trace.horizon
    for k in range(n):
        for j in range(n):
            row = {"period": k, "class": j + 1, "u": trace.u[k, j], "v": trace.v[k, j],
                   "z_before": trace.z[k, j], "z_after": trace.z[k + 1, j]}
            if scenario is not None:
                row = {"scenario": scenario, **row}
            rows.append(row)
    return rows
