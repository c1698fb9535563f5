"""Command-line entry point: ``ddp <command> --config PATH [options]``.

Exit status: 0 on success, 2 when the computation finished but detected a
property violation, 1 on usage, configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .audit import equilibrium_check, ic_sweep, sample_bundles, search_ic_violation
from .errors import ConfigError, DDPError
from .oracle import edf_vs_oracle, random_discrete_instance
from .population import Population, aggregate_truthful, population_from_dict
from .pricing import cost_from_scenarios, grad_check_scenarios, menu_from_scenarios
from .report import FORMATS, Report, write_report
from .scheduler import EPS, residual_trace, simulate, trace_rows
from .supply import (MarketConfig, SupplyModel, enumerate_scenarios, rng_for, sample_paths,
                     scenario_set, validate_model)

COMMANDS = ("price", "schedule", "audit-ic", "equilibrium", "gradcheck", "oracle-edf", "ic-search")
DEFAULT_OUT = {"price": "menu", "schedule": "trace", "audit-ic": "audit", "equilibrium": "equilibrium",
               "gradcheck": "gradcheck", "oracle-edf": "oracle", "ic-search": "ic-search"}

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


@dataclass
class ExperimentConfig:
    market: MarketConfig
    supply: SupplyModel
    population: Population
    x: np.ndarray | None = None
    seed: int = 0
    options: dict[str, Any] = field(default_factory=dict)

    def bundle(self) -> np.ndarray:
        if self.x is not None:
            return self.x
        return aggregate_truthful(self.population, self.market.N)


def _json_error(path, exc: json.JSONDecodeError) -> ConfigError:
    msg = f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
    return ConfigError(msg, [msg])


def load_config(path) -> ExperimentConfig:
    """Parse and cross-validate a JSON experiment config, reporting every violation."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise _json_error(path, exc) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", [str(exc)]) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object", ["config root must be an object"])

    errors: list[str] = []
    m = raw.get("market") or {}
    market = None
    try:
        market = MarketConfig(int(m["N"]), float(m["c0"]))
        errors.extend(market.validate().violations)
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"market: needs numeric N and c0 ({exc!r})")

    s = raw.get("supply") or {}
    supply = None
    if "kind" not in s:
        errors.append("supply.kind is required")
    else:
        params = dict(s.get("params") or {})
        if s["kind"] == "trace-file" and "file" in params:
            params["file"] = os.path.join(os.path.dirname(os.path.abspath(path)), params["file"])
        supply = SupplyModel(s["kind"], params)
        if market is not None:
            errors.extend(f"supply: {v}" for v in validate_model(supply, market).violations)

    pop = Population()
    try:
        pop = population_from_dict(raw.get("types") or [], raw.get("probes") or [],
                                   market.N if market and market.validate().ok else None)
    except ConfigError as exc:
        errors.extend(exc.violations)

    x = None
    if raw.get("x") is not None:
        try:
            x = np.asarray(raw["x"], dtype=float)
            if market is not None and x.shape != (market.N,):
                errors.append(f"x must have length N={market.N}")
            elif np.any(x < 0):
                errors.append("x entries must be >= 0")
        except (TypeError, ValueError):
            errors.append("x must be a list of numbers")
    if errors:
        raise ConfigError(f"{path}: {len(errors)} validation error(s)", errors)
    opts = {k: v for k, v in raw.items() if k not in ("market", "supply", "types", "probes", "x", "seed")}
    return ExperimentConfig(market, supply, pop, x, int(raw.get("seed", 0)), opts)


def _budget(cfg: ExperimentConfig, args) -> dict:
    samples = args.samples if args.samples is not None else cfg.options.get("samples")
    return {"samples": samples, "seed": cfg.seed if args.seed is None else args.seed,
            "workers": args.workers}


def cmd_price(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    b = _budget(cfg, args)
    x = cfg.bundle()
    sc = scenario_set(cfg.supply, cfg.market.N, b["samples"], b["seed"], workers=b["workers"])
    menu = menu_from_scenarios(x, sc, cfg.market.c0, cfg.supply.assumption2)
    cost = cost_from_scenarios(x, sc, cfg.market.c0)
    p = menu.p
    monotone = bool(cfg.market.c0 >= p[0] and np.all(np.diff(p) <= 0) and p[-1] >= 0)
    data = menu.to_dict()
    data.update(expected_cost=cost.value, expected_cost_stderr=cost.stderr, monotone=monotone,
                seed=b["seed"])
    rows = [{"deadline": k + 1, "p": float(p[k]), "stderr": float(menu.stderr[k]), "x": float(x[k])}
            for k in range(len(p))]
    return Report("price", data, rows, ["deadline", "p", "stderr", "x"]), monotone


def cmd_schedule(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    b = _budget(cfg, args)
    x = cfg.bundle()
    # the estimator budget in the config is not a trace length; only --samples or schedule.paths is
    n_paths = args.samples if args.samples is not None else cfg.options.get("schedule", {}).get("paths")
    if cfg.supply.enumerable and n_paths is None:
        paths = [p for p, _ in enumerate_scenarios(cfg.supply)]
    else:
        paths = list(sample_paths(cfg.supply, int(n_paths or 10), b["seed"], cfg.market.N, b["workers"]))
    rows, worst = [], 0.0
    feasible = True
    for i, path in enumerate(paths):
        tr = simulate(x, path)
        xi = residual_trace(x, path)
        worst = max(worst, float(np.max(np.abs(tr.firm_by_class() - np.maximum(0.0, -xi[1:])))))
        feasible &= all(np.all(tr.z[k, :k] <= EPS) for k in range(len(x) + 1))
        rows.extend(trace_rows(tr, i))
    ok = worst <= 1e-12 and feasible
    data = {"x": x, "scenarios": len(paths), "firm_identity_max_error": worst,
            "deadline_feasible": feasible, "c0": cfg.market.c0}
    cols = ["scenario", "period", "class", "u", "v", "z_before", "z_after"]
    return Report("schedule", data, rows, cols), ok


def cmd_audit(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    b = _budget(cfg, args)
    n_random = int(cfg.options.get("audit", {}).get("random_x", 5))
    sc = scenario_set(cfg.supply, cfg.market.N, b["samples"], b["seed"], workers=b["workers"])
    xs = sample_bundles(cfg.bundle(), n_random, b["seed"])
    reps = ic_sweep(cfg.population, xs, sc, cfg.market, args.grid, cfg.supply.assumption2, b["workers"])
    ok = all(r.ok and r.bound_violations == 0 for r in reps if r.qualifies)
    rows = [{"x": r.x, "deadline": r.deadline, "R": r.R, "q": r.q, "truthful_payoff": r.truthful_payoff,
             "best_deviation": r.best_deviation, "best_deviation_payoff": r.best_deviation_payoff,
             "gap": r.gap, "stderr": r.stderr, "slack": r.slack, "ok": r.ok, "qualifies": r.qualifies,
             "bound_violations": r.bound_violations} for r in reps]
    data = {"grid": {"G": args.grid, "qmax": cfg.population.max_demand()},
            "sampled_x": [list(map(float, x)) for x in xs], "method": "exact-enumeration" if sc.exact else "monte-carlo",
            "samples": sc.size, "all_qualifying_ok": ok}
    return Report("audit-ic", data, rows), ok


def cmd_equilibrium(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    b = _budget(cfg, args)
    n_random = int(cfg.options.get("audit", {}).get("random_x", 0))
    rep = equilibrium_check(cfg.population, cfg.supply, cfg.market, b["samples"], b["seed"], G=args.grid,
                            n_random_x=n_random, workers=b["workers"])
    data = rep.to_dict()
    rows = data.pop("ic_summary")
    return Report("equilibrium", data, rows), rep.ok or rep.advisory


def cmd_gradcheck(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    b = _budget(cfg, args)
    x = cfg.bundle()
    h = args.step if args.step is not None else 1e-2 * np.maximum(x, 1e-300)
    sc = scenario_set(cfg.supply, cfg.market.N, b["samples"], b["seed"], workers=b["workers"])
    report = grad_check_scenarios(x, sc, cfg.market.c0, h)
    tol = float(cfg.options.get("gradcheck", {}).get("rel_tol", 1e-2))
    ok = all(r.skipped is not None or r.rel_gap <= tol for r in report)
    rows = [dict(r.__dict__) for r in report]
    data = {"x": x, "h": np.broadcast_to(h, x.shape), "rel_tol": tol,
            "method": "exact-enumeration" if sc.exact else "monte-carlo", "samples": sc.size}
    return Report("gradcheck", data, rows), ok


def cmd_oracle(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    o = cfg.options.get("oracle", {})
    unit = float(o.get("unit", 1.0))
    rows = []
    if int(o.get("random_instances", 0)) > 0:
        rng = rng_for(cfg.seed if args.seed is None else args.seed, 5)
        for _ in range(int(o["random_instances"])):
            x, scen = random_discrete_instance(rng, int(o.get("max_horizon", 3)), int(o.get("levels", 5)))
            rows.append(edf_vs_oracle(x, scen, cfg.market.c0, 1.0))
    else:
        rows.append(edf_vs_oracle(cfg.bundle(), enumerate_scenarios(cfg.supply), cfg.market.c0, unit))
    ok = all(r["pass"] for r in rows)
    verdict = "EDF cost <= oracle min + 1e-9: " + ("pass" if ok else "fail")
    return Report("oracle-edf", {"verdict": verdict, "instances": len(rows)}, rows), ok


def cmd_ic_search(cfg: ExperimentConfig, args) -> tuple[Report, bool]:
    o = cfg.options.get("ic_search", {})
    res = search_ic_violation(int(o.get("trials", 200)), cfg.seed if args.seed is None else args.seed,
                              cfg.market.c0, int(o.get("max_horizon", 3)),
                              tuple(o.get("R_range", (0.2, 0.99))), args.grid)
    # a violation for R < c0 is a finding, not a failure
    return Report("ic-search", res), True


HANDLERS = {"price": cmd_price, "schedule": cmd_schedule, "audit-ic": cmd_audit,
            "equilibrium": cmd_equilibrium, "gradcheck": cmd_gradcheck, "oracle-edf": cmd_oracle,
            "ic-search": cmd_ic_search}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddp", description="Deadline-differentiated pricing engine")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True)
    p.add_argument("--samples", type=int, default=None, help="Monte Carlo budget (default: exact when possible)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grid", type=int, default=8, help="deviation grid steps per deadline")
    p.add_argument("--step", type=float, default=None, help="finite-difference step h")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=FORMATS, default=None)
    return p


def run_command(cmd: str, cfg: ExperimentConfig, args) -> tuple[int, Report]:
    report, ok = HANDLERS[cmd](cfg, args)
    fmt = args.format or ("csv" if cmd == "schedule" else "json")
    out = args.out or f"{DEFAULT_OUT[cmd]}.{fmt}"
    write_report(report, fmt, out)
    return (EXIT_OK if ok else EXIT_VIOLATION), report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1 or (args.samples is not None and args.samples < 2) or args.grid < 1:
        print("ddp: error: --workers and --grid must be >= 1, --samples >= 2", file=sys.stderr)
        return EXIT_USAGE
    if args.step is not None and not args.step > 0:
        print(json.dumps({"code": "parameter_error", "message": "--step must be > 0"}), file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        status, _ = run_command(args.command, cfg, args)
    except ConfigError as exc:
        print(json.dumps({"code": exc.code, "message": str(exc), "violations": exc.violations}), file=sys.stderr)
        return EXIT_USAGE
    except DDPError as exc:
        print(json.dumps({"code": exc.code, "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(json.dumps({"code": "io_error", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    return status


if __name__ == "__main__":
    sys.exit(main())
