"""Configuration-driven command line exposing every verification scenario.

Scenarios are described by a TOML file with an explicit schema version and a
`kind`; a few common fields can be overridden by flags.  Unknown keys are
rejected with their field path.  Reports are JSON with a stable layout plus
optional CSV side tables for term breakdowns.

Exit codes: 0 all gates passed, 1 a gate failed, 2 configuration error,
3 numeric failure during evaluation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import catalog
from .configuration import as_epsilon
from .levy import (
    ExitLawGrid,
    LevyBudget,
    LevyMeasureSpec,
    exit_law_check,
    levy_system_general,
    martingale_checks,
    simulate_path,
)
from .mcstats import GateSpec, MCConfig, make_stream, StreamKey
from .moments import MomentFactor, MomentSpec, evaluate_moment
from .palm import verify_identity
from .partitions import enumerate_epsilon_partitions, partition_type
from .series import SeriesSpec, default_order_cutoff, expectation_series
from .space import QuadratureSpec, sigma_mass

SCHEMA_VERSION = 1
WORKERS_ENV = "POISSONPALM_WORKERS"

KINDS = (
    "verify-mecke-palm",
    "moments",
    "oracle",
    "levy-system",
    "exit-law",
    "martingale",
    "partitions",
)


class ConfigError(Exception):
    """Configuration schema violation; the message names the field path."""


class NumericError(Exception):
    """Numerical failure while running a scenario."""


# ---------------------------------------------------------------------------
# Small schema helpers: explicit take-and-reject-unknown validation.
# ---------------------------------------------------------------------------


def _take(d: dict, key: str, path: str, required: bool = False, default=None):
    if key in d:
        return d.pop(key)
    if required:
        raise ConfigError(f"missing required field {path}.{key}")
    return default


def _ensure_empty(d: dict, path: str) -> None:
    if d:
        raise ConfigError(f"unknown field {path}.{sorted(d)[0]}")


def _sub(d: dict, key: str, path: str, required: bool = False) -> dict | None:
    val = _take(d, key, path, required=required)
    if val is None:
        return None
    if not isinstance(val, dict):
        raise ConfigError(f"field {path}.{key} must be a table")
    return dict(val)


def _parse_window(block: dict, path: str):
    lower = _take(block, "lower", path, required=True)
    upper = _take(block, "upper", path, required=True)
    _ensure_empty(block, path)
    try:
        return catalog.make_window({"lower": lower, "upper": upper})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def _parse_intensity(block: dict, path: str):
    window_block = _sub(block, "window", path, required=True)
    density_block = _sub(block, "density", path, required=True)
    _ensure_empty(block, path)
    window = _parse_window(window_block, f"{path}.window")
    name = _take(density_block, "name", f"{path}.density", required=True)
    try:
        return catalog.make_intensity(str(name), density_block, window)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}.density: {exc}") from exc


def _parse_process(block: dict, path: str):
    name = _take(block, "name", path, required=True)
    try:
        return catalog.make_process(str(name), block)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def _parse_functional(block: dict, path: str):
    name = _take(block, "name", path, required=True)
    try:
        return catalog.make_jump_functional(str(name), block)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def _parse_quadrature(block: dict | None, path: str) -> QuadratureSpec:
    if block is None:
        return QuadratureSpec()
    scheme = _take(block, "scheme", path)
    ppa = _take(block, "points_per_axis", path)
    total = _take(block, "total_points", path)
    cap = _take(block, "eval_cap", path, default=2_000_000)
    _ensure_empty(block, path)
    try:
        return QuadratureSpec(
            scheme,
            None if ppa is None else int(ppa),
            None if total is None else int(total),
            int(cap),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def _parse_gate(block: dict | None, path: str) -> GateSpec:
    if block is None:
        return GateSpec()
    z_max = _take(block, "z_max", path, default=4.0)
    abs_floor = _take(block, "abs_floor", path)
    _ensure_empty(block, path)
    return GateSpec(float(z_max), None if abs_floor is None else float(abs_floor))


def _parse_epsilon(value, path: str):
    try:
        return as_epsilon(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Scenario runners.  Each returns (passed, results dict, csv rows or None).
# ---------------------------------------------------------------------------


def _run_partitions(cfg: dict, common: dict):
    n = int(_take(cfg, "n", "config", required=True))
    eps_raw = _take(cfg, "epsilon", "config", default="1" * n)
    eps = _parse_epsilon(eps_raw, "config.epsilon")
    if len(eps) != n:
        raise ConfigError("config.epsilon length must equal config.n")
    _ensure_empty(cfg, "config")
    parts = enumerate_epsilon_partitions(n, eps)
    by_blocks: dict[int, int] = {}
    by_type: dict[str, int] = {}
    for p in parts:
        by_blocks[p.k] = by_blocks.get(p.k, 0) + 1
        t = partition_type(p)
        by_type[t] = by_type.get(t, 0) + 1
    lines = [
        f"partitions n={n} epsilon={''.join(map(str, eps))}",
        f"total {len(parts)}",
    ]
    for k in sorted(by_blocks):
        lines.append(f"blocks {k} count {by_blocks[k]}")
    def type_key(t: str):
        sizes = tuple(int(s) for s in t.split("+"))
        return (len(sizes), tuple(-s for s in sizes))

    for t in sorted(by_type, key=type_key):
        lines.append(f"type {t} count {by_type[t]}")
    lines.extend(str(p) for p in parts)
    text = "\n".join(lines)
    print(text)
    results = {
        "n": n,
        "epsilon": list(eps),
        "total": len(parts),
        "by_block_count": {str(k): v for k, v in sorted(by_blocks.items())},
        "by_type": {t: by_type[t] for t in sorted(by_type, key=type_key)},
        "partitions": [str(p) for p in parts],
    }
    return True, results, None


def _run_verify_mecke_palm(cfg: dict, common: dict):
    intensity = _parse_intensity(_sub(cfg, "intensity", "config", required=True), "config.intensity")
    process = _parse_process(_sub(cfg, "process", "config", required=True), "config.process")
    eps = _parse_epsilon(_take(cfg, "epsilon", "config", required=True), "config.epsilon")
    if len(eps) != process.arity:
        raise ConfigError("config.epsilon length must equal config.process.arity")
    replicates = int(_take(cfg, "replicates", "config", default=common["replicates"] or 10_000))
    rhs_replicates = int(_take(cfg, "rhs_replicates", "config", default=replicates))
    rhs_mode = str(_take(cfg, "rhs_mode", "config", default="mc-outer"))
    partition_filter = str(_take(cfg, "partition_filter", "config", default="admissible"))
    quad = _parse_quadrature(_sub(cfg, "quadrature", "config"), "config.quadrature")
    gate_spec = _parse_gate(_sub(cfg, "gate", "config"), "config.gate")
    _ensure_empty(cfg, "config")
    mc_lhs = MCConfig(replicates, common["seed"], "mecke-palm", common["workers"])
    mc_rhs = MCConfig(rhs_replicates, common["seed"], "mecke-palm", common["workers"])
    report = verify_identity(
        process, eps, intensity,
        mc_lhs=mc_lhs, mc_rhs=mc_rhs, quad=quad, gate_spec=gate_spec,
        rhs_mode=rhs_mode, partition_filter=partition_filter,
    )
    rows = [
        {"term": t["term"], "k": t["k"], "mean": t["mean"],
         "std_error": t["std_error"], "replicates": t["replicates"]}
        for t in report.details["rhs"]["terms"]
    ]
    return report.passed, report.to_dict(), rows


def _run_moments(cfg: dict, common: dict):
    intensity = _parse_intensity(_sub(cfg, "intensity", "config", required=True), "config.intensity")
    factor_blocks = _take(cfg, "factors", "config", required=True)
    if not isinstance(factor_blocks, list) or not factor_blocks:
        raise ConfigError("config.factors must be a non-empty array of tables")
    factors = []
    for i, fb in enumerate(factor_blocks):
        fb = dict(fb)
        path = f"config.factors[{i}]"
        proc = _parse_process(_sub(fb, "process", path, required=True), f"{path}.process")
        power = int(_take(fb, "power", path, default=1))
        eps = _parse_epsilon(_take(fb, "epsilon", path, required=True), f"{path}.epsilon")
        _ensure_empty(fb, path)
        try:
            factors.append(MomentFactor(proc, power, eps))
        except ValueError as exc:
            raise ConfigError(f"invalid {path}: {exc}") from exc
    weight_block = _sub(cfg, "weight", "config")
    weight = _parse_process(weight_block, "config.weight") if weight_block else None
    replicates = int(_take(cfg, "replicates", "config", default=common["replicates"] or 10_000))
    rhs_replicates = int(_take(cfg, "rhs_replicates", "config", default=replicates))
    rhs_mode = str(_take(cfg, "rhs_mode", "config", default="mc-outer"))
    quad = _parse_quadrature(_sub(cfg, "quadrature", "config"), "config.quadrature")
    gate_spec = _parse_gate(_sub(cfg, "gate", "config"), "config.gate")
    _ensure_empty(cfg, "config")
    try:
        spec = MomentSpec(tuple(factors), weight)
    except ValueError as exc:
        raise ConfigError(f"invalid config.factors: {exc}") from exc
    report = evaluate_moment(
        spec, intensity,
        mc_lhs=MCConfig(replicates, common["seed"], "moments", common["workers"]),
        mc_rhs=MCConfig(rhs_replicates, common["seed"], "moments", common["workers"]),
        quad=quad, gate_spec=gate_spec, rhs_mode=rhs_mode,
    )
    rows = [
        {"term": t["term"], "k": t["k"], "mean": t["mean"],
         "std_error": t["std_error"], "replicates": t["replicates"]}
        for t in report.details["rhs"]["terms"]
    ]
    return report.passed, report.to_dict(), rows


def _run_oracle(cfg: dict, common: dict):
    intensity = _parse_intensity(_sub(cfg, "intensity", "config", required=True), "config.intensity")
    g_block = _sub(cfg, "g", "config", required=True)
    name = str(_take(g_block, "name", "config.g", required=True))
    bound = _take(g_block, "bound", "config.g")
    try:
        coefficient = catalog.make_series_coefficient(name, g_block)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config.g: {exc}") from exc
    quad = _parse_quadrature(_sub(cfg, "quadrature", "config"), "config.quadrature")
    n_max = _take(cfg, "n_max", "config")
    _ensure_empty(cfg, "config")
    mass = sigma_mass(intensity, quad)
    if n_max is None:
        n_max = default_order_cutoff(mass)
    spec = SeriesSpec(int(n_max), coefficient, None if bound is None else float(bound))
    result = expectation_series(spec, intensity, quad)
    results = {"g": name, "mass": mass, **result.to_dict()}
    return True, results, None


def _parse_levy_common(cfg: dict, common: dict):
    levy = LevyMeasureSpec(
        _parse_intensity(_sub(cfg, "jump_measure", "config", required=True), "config.jump_measure")
    )
    drift = _take(cfg, "drift", "config", default=[0.0] * levy.dim)
    paths = int(_take(cfg, "paths", "config", default=common["replicates"] or 10_000))
    u_nodes = int(_take(cfg, "u_nodes", "config", default=4))
    quad = _parse_quadrature(_sub(cfg, "quadrature", "config"), "config.quadrature")
    budget = LevyBudget(paths, common["seed"], "levy", common["workers"], u_nodes, quad)
    return levy, np.asarray(drift, dtype=np.float64), budget


def _run_levy_system(cfg: dict, common: dict):
    levy, drift, budget = _parse_levy_common(cfg, common)
    functional = _parse_functional(_sub(cfg, "functional", "config", required=True), "config.functional")
    eps = _parse_epsilon(_take(cfg, "epsilon", "config", default="1" * functional.n), "config.epsilon")
    if len(eps) != functional.n:
        raise ConfigError("config.epsilon length must equal config.functional.n")
    horizon = float(_take(cfg, "horizon", "config", required=True))
    gate_spec = _parse_gate(_sub(cfg, "gate", "config"), "config.gate")
    paths_csv = _take(cfg, "paths_csv", "config", default=0)
    _ensure_empty(cfg, "config")
    report = levy_system_general(functional, eps, levy, drift, horizon, budget, gate_spec)
    rows = None
    if paths_csv:
        rows = []
        for i in range(int(paths_csv)):
            rng = make_stream(StreamKey(budget.seed, f"{budget.label}/csv", i))
            path = simulate_path(levy, drift, horizon, rng, budget.quad)
            final = path.position_right(np.asarray(horizon))
            rows.append(
                {
                    "path_index": i,
                    "jump_count": path.jump_count,
                    "final_position": float(np.linalg.norm(final)),
                    "first_jump_time": float(path.times[0]) if path.jump_count else "",
                    "last_jump_time": float(path.times[-1]) if path.jump_count else "",
                }
            )
    return report.passed, report.to_dict(), rows


def _run_exit_law(cfg: dict, common: dict):
    levy, drift, budget = _parse_levy_common(cfg, common)
    domain_lo = _take(cfg, "domain_lower", "config", required=True)
    domain_hi = _take(cfg, "domain_upper", "config", required=True)
    start = _take(cfg, "start", "config", required=True)
    interval = _take(cfg, "interval", "config", required=True)
    a_lo = _take(cfg, "a_lower", "config", required=True)
    a_hi = _take(cfg, "a_upper", "config", required=True)
    b_lo = _take(cfg, "b_lower", "config", required=True)
    b_hi = _take(cfg, "b_upper", "config", required=True)
    time_bins = int(_take(cfg, "grid_time_bins", "config", default=48))
    space_bins = int(_take(cfg, "grid_space_bins", "config", default=40))
    gate_spec = _parse_gate(_sub(cfg, "gate", "config"), "config.gate")
    _ensure_empty(cfg, "config")
    try:
        report = exit_law_check(
            levy, drift, domain_lo, domain_hi, start,
            (float(interval[0]), float(interval[1])),
            a_lo, a_hi, b_lo, b_hi, budget, gate_spec,
            ExitLawGrid(time_bins, space_bins),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid exit-law geometry: {exc}") from exc
    return report.passed, report.to_dict(), None


def _run_martingale(cfg: dict, common: dict):
    levy, drift, budget = _parse_levy_common(cfg, common)
    functional = _parse_functional(_sub(cfg, "functional", "config", required=True), "config.functional")
    if functional.n != 1:
        raise ConfigError("config.functional.n must be 1 for martingale checks")
    t = float(_take(cfg, "t", "config", required=True))
    gate_spec = _parse_gate(_sub(cfg, "gate", "config"), "config.gate")
    _ensure_empty(cfg, "config")
    report = martingale_checks(functional, levy, drift, t, budget, gate_spec)
    return report.passed, report.to_dict(), None


_RUNNERS = {
    "partitions": _run_partitions,
    "verify-mecke-palm": _run_verify_mecke_palm,
    "moments": _run_moments,
    "oracle": _run_oracle,
    "levy-system": _run_levy_system,
    "exit-law": _run_exit_law,
    "martingale": _run_martingale,
}


def run_scenario(config: dict, *, seed: int, workers: int, replicates: int | None):
    """Validate and execute one scenario; returns (passed, report dict)."""
    cfg = dict(config)
    version = _take(cfg, "schema_version", "config", required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config.schema_version must be {SCHEMA_VERSION}")
    kind = str(_take(cfg, "kind", "config", required=True))
    if kind not in _RUNNERS:
        raise ConfigError(f"config.kind must be one of {KINDS}")
    # seed/workers may live in the config; flags win.
    cfg_seed = _take(cfg, "seed", "config", default=0)
    cfg_workers = _take(cfg, "workers", "config")
    _take(cfg, "report", "config")  # allowed in config, handled by the caller
    common = {
        "seed": seed if seed is not None else int(cfg_seed),
        "workers": workers
        if workers is not None
        else int(cfg_workers or os.environ.get(WORKERS_ENV, 1)),
        "replicates": replicates,
    }
    start = time.monotonic()
    passed, results, rows = _RUNNERS[kind](cfg, common)
    wall = time.monotonic() - start
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": common["seed"],
        "workers": common["workers"],
        "config": _jsonable(config),
        "passed": bool(passed),
        "results": _jsonable(results),
        "wall_time_s": wall,
    }
    return passed, report, rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_report(report: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _write_csv(rows: list[dict], path: str) -> None:
    if not rows:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poissonpalm",
        description="Verification scenarios for Poisson random measure identities.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="TOML scenario configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--replicates", type=int, default=None, help="budget override")
        p.add_argument("--report", default=None, help="JSON report output path")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default ${WORKERS_ENV} or 1)")
        if kind == "partitions":
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--epsilon", default=None)
        if kind == "verify-mecke-palm":
            p.add_argument("--process", default=None, help="catalog process name")
            p.add_argument("--epsilon", default=None, help="epsilon bits, e.g. 110")
        if kind == "moments":
            p.add_argument("--spec", default=None, help="alias for --config")
        if kind == "oracle":
            p.add_argument("--g", default=None, help="catalog 0-process name")
            p.add_argument("--nmax", type=int, default=None)
    return parser


_DEFAULT_UNIT_INTENSITY = {
    "window": {"lower": [0.0], "upper": [1.0]},
    "density": {"name": "constant", "level": 1.0},
}


def _config_from_args(args) -> dict:
    """Load the TOML config (if any) and fold in per-kind convenience flags."""
    path = getattr(args, "config", None) or getattr(args, "spec", None)
    if path:
        with open(path, "rb") as fh:
            config = tomllib.load(fh)
    else:
        config = {"schema_version": SCHEMA_VERSION, "kind": args.kind}
    config.setdefault("schema_version", SCHEMA_VERSION)
    config.setdefault("kind", args.kind)
    if args.kind == "partitions":
        if args.n is not None:
            config["n"] = args.n
        if args.epsilon is not None:
            config["epsilon"] = args.epsilon
    if args.kind == "verify-mecke-palm":
        if args.process is not None:
            config["process"] = {"name": args.process}
            config.setdefault("intensity", _DEFAULT_UNIT_INTENSITY)
        if args.epsilon is not None:
            config["epsilon"] = args.epsilon
            if args.process == "diag-indicator":
                config["process"]["arity"] = len(args.epsilon)
    if args.kind == "oracle":
        if args.g is not None:
            config["g"] = {"name": args.g}
            config.setdefault("intensity", _DEFAULT_UNIT_INTENSITY)
        if args.nmax is not None:
            config["n_max"] = args.nmax
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report_path = args.report or config.get("report")
    try:
        passed, report, rows = run_scenario(
            config,
            seed=args.seed,
            workers=args.workers,
            replicates=args.replicates,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric or environment failure
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if report_path:
        _write_report(report, report_path)
        if rows:
            base, _ = os.path.splitext(report_path)
            _write_csv(rows, base + ".terms.csv")
    if args.kind != "partitions":
        print(json.dumps({k: report[k] for k in ("kind", "seed", "passed")}))
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
