"""Intermittent-supply models and the firm-supply market settings."""
from __future__ import annotations

import csv
import functools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import IngestionError, UnsupportedOperationError
from .population import ValidationResult

KINDS = ("deterministic", "finite-scenario", "iid-uniform", "trace-file")
ENUMERABLE = ("deterministic", "finite-scenario", "trace-file")
PROB_TOL = 1e-12
# fixed so that batch results do not depend on the worker count
CHUNK = 1 << 16


@dataclass(frozen=True)
class MarketConfig:
    N: int
    c0: float

    def validate(self) -> ValidationResult:
        v = []
        if int(self.N) != self.N or self.N < 1:
            v.append(f"market.N must be a positive integer, got {self.N}")
        if not self.c0 > 0:
            v.append(f"market.c0 must be > 0, got {self.c0}")
        return ValidationResult(not v, v)


@dataclass(frozen=True)
class SupplyModel:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict, hash=False)

    @classmethod
    def deterministic(cls, path) -> "SupplyModel":
        return cls("deterministic", {"path": [float(s) for s in path]})

    @classmethod
    def finite(cls, scenarios) -> "SupplyModel":
        """``scenarios`` is an iterable of ``(path, probability)`` pairs."""
        return cls("finite-scenario", {"scenarios": [
            {"path": [float(s) for s in p], "prob": float(w)} for p, w in scenarios]})

    @classmethod
    def iid_uniform(cls, low, high) -> "SupplyModel":
        return cls("iid-uniform", {"low": low, "high": high})

    @classmethod
    def trace_file(cls, path) -> "SupplyModel":
        return cls("trace-file", {"file": os.fspath(path)})

    @property
    def enumerable(self) -> bool:
        return self.kind in ENUMERABLE

    @property
    def assumption2(self) -> bool:
        # only the absolutely continuous, compactly supported family qualifies
        return self.kind == "iid-uniform"

    def horizon(self) -> int | None:
        if self.kind == "deterministic":
            return len(self.params["path"])
        if self.kind == "finite-scenario":
            lens = {len(s["path"]) for s in self.params["scenarios"]}
            return lens.pop() if len(lens) == 1 else None
        if self.kind == "trace-file":
            return load_trace(self.params["file"]).shape[1]
        lo, hi = np.atleast_1d(self.params["low"]), np.atleast_1d(self.params["high"])
        n = max(lo.size, hi.size)
        return None if n == 1 else n


@functools.lru_cache(maxsize=32)
def _load_trace_cached(path: str, mtime: float) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for r, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                vals = []
                for c, cell in enumerate(row, start=1):
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        if r == 1 and not rows:
                            vals = None
                            break
                        raise IngestionError(f"{path}: row {r}, column {c}: not a number: {cell!r}")
                if vals is None:  # header row
                    continue
                if width is None:
                    width = len(vals)
                elif len(vals) != width:
                    raise IngestionError(f"{path}: row {r}: expected {width} columns, got {len(vals)}")
                for c, s in enumerate(vals, start=1):
                    if not np.isfinite(s) or s < 0:
                        raise IngestionError(f"{path}: row {r}, column {c}: supply must be finite and >= 0")
                rows.append(vals)
    except OSError as exc:
        raise IngestionError(f"cannot read trace file {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    out = np.array(rows, dtype=float)
    out.flags.writeable = False
    return out


def load_trace(path) -> np.ndarray:
    """Read a supply trace CSV: one scenario per row, optional header."""
    path = os.fspath(path)
    try:
        mtime = os.path.getmtime(path)
    except OSError as exc:
        raise IngestionError(f"cannot read trace file {path}: {exc}") from exc
    return _load_trace_cached(path, mtime)


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """Counter-based child generator: the same ``(seed, key)`` always yields
    the same stream, independent of evaluation order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(key))))


def _bounds(model: SupplyModel, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.broadcast_to(np.asarray(model.params["low"], dtype=float), (horizon,))
    hi = np.broadcast_to(np.asarray(model.params["high"], dtype=float), (horizon,))
    return lo, hi


def _draw(model: SupplyModel, rng: np.random.Generator, size: int, horizon: int) -> np.ndarray:
    if model.kind == "iid-uniform":
        lo, hi = _bounds(model, horizon)
        return rng.uniform(lo, hi, size=(size, horizon))
    paths, probs = _table(model)
    idx = rng.choice(len(paths), size=size, p=probs)
    return paths[idx]


def _table(model: SupplyModel) -> tuple[np.ndarray, np.ndarray]:
    if model.kind == "deterministic":
        return np.array([model.params["path"]], dtype=float), np.array([1.0])
    if model.kind == "finite-scenario":
        sc = model.params["scenarios"]
        return (np.array([s["path"] for s in sc], dtype=float),
                np.array([s["prob"] for s in sc], dtype=float))
    if model.kind == "trace-file":
        rows = load_trace(model.params["file"])
        return np.array(rows), np.full(len(rows), 1.0 / len(rows))
    raise UnsupportedOperationError(
        f"supply kind {model.kind!r} has no finite scenario list; use Monte Carlo sampling")


def _resolve_horizon(model: SupplyModel, horizon: int | None) -> int:
    n = model.horizon()
    if horizon is None:
        if n is None:
            raise IngestionError("horizon N is required for scalar iid-uniform bounds")
        return n
    return int(horizon)


def sample_path(model: SupplyModel, seed: int, horizon: int | None = None) -> np.ndarray:
    n = _resolve_horizon(model, horizon)
    if model.kind == "deterministic":
        return np.array(model.params["path"], dtype=float)
    return _draw(model, rng_for(seed), 1, n)[0]


def sample_paths(model: SupplyModel, n_samples: int, seed: int, horizon: int | None = None,
                 workers: int = 1) -> np.ndarray:
    """Draw ``n_samples`` paths. Chunk ``c`` is drawn from ``rng_for(seed, c)``
    so the result is the same for any ``workers``."""
    n = _resolve_horizon(model, horizon)
    starts = list(range(0, n_samples, CHUNK))

    def chunk(c: int) -> np.ndarray:
        size = min(CHUNK, n_samples - starts[c])
        return _draw(model, rng_for(seed, c), size, n)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(chunk, range(len(starts))))
    else:
        parts = [chunk(c) for c in range(len(starts))]
    if not parts:
        return np.empty((0, n))
    return np.concatenate(parts, axis=0)


def enumerate_scenarios(model: SupplyModel) -> list[tuple[np.ndarray, float]]:
    paths, probs = _table(model)
    return [(p, float(w)) for p, w in zip(paths, probs)]


def validate_model(model: SupplyModel, cfg: MarketConfig) -> ValidationResult:
    v: list[str] = []
    flags = {"assumption2": model.assumption2}
    if model.kind not in KINDS:
        return ValidationResult(False, [f"supply.kind must be one of {KINDS}, got {model.kind!r}"], flags)
    try:
        if model.kind == "iid-uniform":
            lo, hi = (np.atleast_1d(np.asarray(model.params[k], dtype=float)) for k in ("low", "high"))
            for name, arr in (("low", lo), ("high", hi)):
                if arr.size not in (1, cfg.N):
                    v.append(f"supply.params.{name} must be a scalar or have length N={cfg.N}")
            if not v:
                lo, hi = _bounds(model, cfg.N)
                if np.any(lo < 0) or not np.all(np.isfinite(hi)):
                    v.append("supply.params bounds must be finite with low >= 0")
                if np.any(hi <= lo):
                    v.append("supply.params.high must exceed low in every period")
        else:
            paths, probs = _table(model)
            for i, p in enumerate(paths):
                if len(p) != cfg.N:
                    v.append(f"supply path {i} has length {len(p)}, expected N={cfg.N}")
                    break
            if np.any(paths < 0) or not np.all(np.isfinite(paths)):
                v.append("supply paths must be finite and >= 0")
            if np.any(probs < 0):
                v.append("scenario probabilities must be >= 0")
            if abs(float(np.sum(probs)) - 1.0) > PROB_TOL:
                v.append(f"scenario probabilities sum to {float(np.sum(probs)):.15g}, expected 1")
    except (KeyError, TypeError, ValueError) as exc:
        v.append(f"malformed supply parameters: {exc!r}")
    except IngestionError as exc:
        v.append(str(exc))
    return ValidationResult(not v, v, flags)


@dataclass(frozen=True)
class ScenarioSet:
    """Weighted supply paths: an exact enumeration or an equally weighted sample."""

    paths: np.ndarray
    weights: np.ndarray
    exact: bool

    @property
    def size(self) -> int:
        return len(self.weights)


def scenario_set(model: SupplyModel, horizon: int, samples: int | None = None, seed: int = 0,
                 method: str = "auto", workers: int = 1) -> ScenarioSet:
    """Resolve an evaluation budget.

    ``method="auto"`` enumerates when the model allows it and no sample
    count is given; otherwise draws ``samples`` paths (default ``10**5``).
    """
    if method not in ("auto", "exact", "monte-carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact" or (method == "auto" and model.enumerable and samples is None):
        if not model.enumerable:
            raise UnsupportedOperationError(
                f"exact evaluation requested but supply kind {model.kind!r} is continuous")
        paths, probs = _table(model)
        return ScenarioSet(paths, probs, True)
    m = int(samples if samples is not None else 10**5)
    paths = sample_paths(model, m, seed, horizon, workers=workers)
    return ScenarioSet(paths, np.full(m, 1.0 / m), False)
