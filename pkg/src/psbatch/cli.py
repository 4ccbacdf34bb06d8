"""Command-line surface: compute, simulate, validate, export.

Subcommands: mean, laplace, ccdf, simulate, stationary, validate.  Every
emitted record embeds the fully resolved configuration (defaults included)
so a record suffices to reproduce its run.  Numbers are serialized as
shortest round-trip decimals in both JSON and CSV, so the two formats carry
identical values.

Exit codes: 0 success, 2 input/domain error (argparse uses the same code),
3 numerical failure, 4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import oracle, sim, solver, triangular
from .errors import (
    ConvergenceError,
    DomainError,
    InversionUnstable,
    NonFiniteIntegrand,
    PoleError,
    PsbatchError,
    RadiusError,
    SingularDiagonal,
    StabilityViolation,
)
from .model import ModelParams, StationaryLaw, spectral, validate_params
from .specfun import ThetaContext

_EXIT_OK = 0
_EXIT_DOMAIN = 2
_EXIT_NUMERICAL = 3
_EXIT_VALIDATION = 4

_NUMERICAL_ERRORS = (
    ConvergenceError,
    InversionUnstable,
    NonFiniteIntegrand,
    PoleError,
    RadiusError,
    SingularDiagonal,
)

_CONFIG_DEFAULTS = {
    "rho": None,
    "q": None,
    "s": "1.0",
    "t": "1.0,2.0,5.0",
    "n": 0,
    "reps": 100000,
    "seed": 12345,
    "order": 12,
    "mode": "batch",
    "b_max": 60,
    "n_max": 400,
    "oracle_tol": 1e-12,
    "format": "json",
    "output": None,
    "check": None,
    "quick": False,
    "perturb_q_coefficient": 0.0,
}


def _parse_grid(text: str) -> list[float]:
    vals = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    if not vals:
        raise DomainError("grid must contain at least one value")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise DomainError(f"grid must be strictly increasing, got {vals}")
    return vals


def _read_config_file(path: str) -> dict:
    loaded = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{line_no}: expected key=value, got {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_DEFAULTS:
                raise DomainError(f"{path}:{line_no}: unknown config key {key!r}")
            loaded[key] = val
    return loaded


def _coerce(key: str, value):
    if value is None:
        return None
    if key in ("rho", "q", "oracle_tol", "perturb_q_coefficient"):
        return float(value)
    if key in ("n", "reps", "seed", "order", "b_max", "n_max"):
        return int(value)
    if key == "quick":
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes", "on")
    return str(value)


def _resolve_config(args: argparse.Namespace, require_params: bool = True) -> dict:
    cfg = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        for key, val in _read_config_file(args.config).items():
            cfg[key] = _coerce(key, val)
    for key in _CONFIG_DEFAULTS:
        flag_val = getattr(args, key, None)
        if flag_val is not None and flag_val is not False:
            cfg[key] = _coerce(key, flag_val)
    cfg["command"] = args.command
    if require_params and (cfg["rho"] is None or cfg["q"] is None):
        raise DomainError("rho and q are required (flags --rho/--q or a config file)")
    return cfg


def _params(cfg: dict) -> ModelParams:
    return validate_params(cfg["rho"], cfg["q"])


def _emit(record: dict, cfg: dict) -> None:
    if cfg["format"] == "json":
        text = json.dumps(record, indent=2, allow_nan=False)
    else:
        text = _to_csv(record)
    if cfg["output"]:
        with open(cfg["output"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _flatten(prefix: str, obj, out: dict) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(prefix + k + ".", v, out)
    else:
        out[prefix.rstrip(".")] = obj


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _to_csv(record: dict) -> str:
    """One row per result entry, config flattened into repeated columns."""
    meta = {}
    _flatten("", {k: v for k, v in record.items() if k != "results"}, meta)
    rows = record.get("results", [{}])
    flat_rows = []
    for row in rows:
        flat = {}
        _flatten("", row, flat)
        flat_rows.append(flat)
    result_keys = sorted({k for fr in flat_rows for k in fr})
    header = list(meta.keys()) + result_keys
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for flat in flat_rows:
        writer.writerow([_csv_cell(meta[k]) for k in meta] + [_csv_cell(flat.get(k)) for k in result_keys])
    return buf.getvalue()


def _base_record(cfg: dict) -> dict:
    clean = {k: v for k, v in cfg.items() if k != "command"}
    return {"command": cfg["command"], "config": clean}


def _radius_margin(params: ModelParams) -> float:
    sp = spectral(params, 0.0)
    ctx = ThetaContext(1.0 - sp.c_plus)
    # kernel arguments are nonpositive along every integration path, so the
    # whole branch radius separates them from the positive-axis singularity
    return ctx.radius


def cmd_mean(cfg: dict) -> tuple[dict, int]:
    params = _params(cfg)
    value = solver.mean_batch_sojourn(params)
    record = _base_record(cfg)
    result = {
        "rho": params.rho,
        "q": params.q,
        "mean": value,
        "method": "analytic",
        "diagnostics": {
            "b_max_used": None,
            "radius_margin": _radius_margin(params),
        },
    }
    code = _EXIT_OK
    if cfg["check"] == "oracle":
        table = oracle.solve_conditional_means(
            params, n_max=cfg["n_max"], b_max=cfg["b_max"]
        )
        bracket = oracle.aggregate_mean(table, params)
        rel = abs(value - bracket.value) / bracket.value
        tol = 1e-4 + bracket.half_width / bracket.value
        result["diagnostics"]["b_max_used"] = cfg["b_max"]
        result["oracle"] = {
            "mean": bracket.value,
            "half_width": bracket.half_width,
            "rel_diff": rel,
            "tolerance": tol,
            "passed": bool(rel <= tol),
        }
        if rel > tol:
            code = _EXIT_VALIDATION
    record["results"] = [result]
    return record, code


def cmd_laplace(cfg: dict) -> tuple[dict, int]:
    params = _params(cfg)
    s_grid = _parse_grid(cfg["s"])
    if any(s < 0 for s in s_grid):
        raise DomainError("laplace s-grid must be nonnegative")
    record = _base_record(cfg)
    results = []
    code = _EXIT_OK
    for s in s_grid:
        tv = solver.batch_lst(params, s)
        row = {"s": tv.s, "value": tv.value}
        if cfg["check"] == "oracle" and s > 0.0:
            table = oracle.solve_conditional_lst(
                params, s, n_max=cfg["n_max"], b_max=cfg["b_max"], tol=cfg["oracle_tol"]
            )
            bracket = oracle.aggregate_lst(table, params)
            diff = abs(tv.value - bracket.value)
            tol = 1e-5 + bracket.half_width
            row["oracle"] = {
                "value": bracket.value,
                "half_width": bracket.half_width,
                "abs_diff": diff,
                "tolerance": tol,
                "passed": bool(diff <= tol),
            }
            if diff > tol:
                code = _EXIT_VALIDATION
        results.append(row)
    record["results"] = results
    return record, code


def cmd_ccdf(cfg: dict) -> tuple[dict, int]:
    params = _params(cfg)
    t_grid = _parse_grid(cfg["t"])
    curve = solver.ccdf(params, t_grid, order=cfg["order"])
    record = _base_record(cfg)
    record["results"] = [
        {"t": float(t), "ccdf": float(v)} for t, v in zip(curve.t, curve.values)
    ]
    record["diagnostics"] = {
        "order": curve.order,
        "max_order_disagreement": curve.max_order_disagreement,
    }
    return record, _EXIT_OK


def cmd_simulate(cfg: dict) -> tuple[dict, int]:
    params = _params(cfg)
    runner = sim.simulate_batch_sojourn if cfg["mode"] == "batch" else sim.simulate_job_sojourn
    est = runner(params, cfg["reps"], cfg["seed"])
    record = _base_record(cfg)
    record["results"] = [
        {
            "mode": cfg["mode"],
            "mean": est.mean,
            "ci_half_width_99": est.ci_half_width,
            "n_reps": est.n_reps,
            "seed": est.seed,
        }
    ]
    return record, _EXIT_OK


def cmd_stationary(cfg: dict) -> tuple[dict, int]:
    params = _params(cfg)
    law = StationaryLaw(params)
    n = cfg["n"]
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    record = _base_record(cfg)
    record["results"] = [{"n": n, "pmf": float(law.pmf(n)), "mean_jobs": law.mean()}]
    return record, _EXIT_OK


def _validate_checks(cfg: dict) -> list[dict]:
    params = _params(cfg)
    quick = cfg["quick"]
    perturb = cfg["perturb_q_coefficient"]
    checks = []

    # dual-route Q coefficients
    sp1 = spectral(params, 1.0)
    b_cap = 8 if quick else 20
    worst = 0.0
    for b in range(1, b_cap + 1):
        for l in range(1, b + 1):
            quad_val = triangular.q_coefficient(sp1, b, l)
            closed_val = triangular.q_coefficient_closed(sp1, b, l) * (1.0 + perturb)
            worst = max(worst, abs(quad_val - closed_val) / abs(closed_val))
    checks.append(
        {
            "name": "q_coefficient_dual_route",
            "measured": worst,
            "tolerance": 1e-8,
            "passed": bool(worst <= 1e-8),
        }
    )

    # triangular solve residual
    table = triangular.solve_boundary_lst(sp1, b_max=20 if quick else 40)
    checks.append(
        {
            "name": "triangular_residual",
            "measured": table.max_residual,
            "tolerance": 1e-9,
            "passed": bool(table.max_residual <= 1e-9),
        }
    )

    # transform vs oracle at s = 1
    n_max = 250 if quick else cfg["n_max"]
    b_max = 40 if quick else cfg["b_max"]
    otab = oracle.solve_conditional_lst(params, 1.0, n_max=n_max, b_max=b_max)
    bracket = oracle.aggregate_lst(otab, params)
    lst_val = solver.batch_lst(params, 1.0).value
    diff = abs(lst_val - bracket.value)
    tol = 1e-5 + bracket.half_width
    checks.append(
        {
            "name": "lst_vs_oracle_s1",
            "measured": diff,
            "tolerance": tol,
            "passed": bool(diff <= tol),
        }
    )

    # analyticity residual for small b, reusing the oracle columns
    worst_c = 0.0
    for b in range(1, 5):
        if b == 1:
            lower = None
        else:
            lower = lambda z, b=b: oracle.column_generating(otab, b - 1, z)
        res = triangular.condanalytic_residual(sp1, b, table.coefficient(b), lower)
        worst_c = max(worst_c, abs(res))
    checks.append(
        {
            "name": "analyticity_residual",
            "measured": worst_c,
            "tolerance": 1e-8,
            "passed": bool(worst_c <= 1e-8),
        }
    )

    if not quick:
        mtab = oracle.solve_conditional_means(params, n_max=cfg["n_max"], b_max=cfg["b_max"])
        mb = oracle.aggregate_mean(mtab, params)
        mean_val = solver.mean_batch_sojourn(params)
        rel = abs(mean_val - mb.value) / mb.value
        tol_m = 1e-4 + mb.half_width / mb.value
        checks.append(
            {
                "name": "mean_vs_oracle",
                "measured": rel,
                "tolerance": tol_m,
                "passed": bool(rel <= tol_m),
            }
        )

        worst_pde = 0.0
        for u, frac in ((0.3, 0.4), (0.5, 0.5), (0.62, 0.6)):
            resid, scale = solver.pde_residual(params, 1.0, u, u * frac)
            worst_pde = max(worst_pde, abs(resid) / scale)
        checks.append(
            {
                "name": "pde_residual",
                "measured": worst_pde,
                "tolerance": 1e-3,
                "passed": bool(worst_pde <= 1e-3),
            }
        )
    return checks


def cmd_validate(cfg: dict) -> tuple[dict, int]:
    checks = _validate_checks(cfg)
    record = _base_record(cfg)
    record["results"] = checks
    all_pass = all(c["passed"] for c in checks)
    record["status"] = "ok" if all_pass else "failed"
    return record, _EXIT_OK if all_pass else _EXIT_VALIDATION


_COMMANDS = {
    "mean": cmd_mean,
    "laplace": cmd_laplace,
    "ccdf": cmd_ccdf,
    "simulate": cmd_simulate,
    "stationary": cmd_stationary,
    "validate": cmd_validate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psbatch",
        description="Batch sojourn times in the processor-sharing queue "
        "with geometric batch arrivals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--rho", type=float, help="batch arrival rate")
        p.add_argument("--q", type=float, help="geometric batch-size ratio in (0,1)")
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--format", choices=("json", "csv"), help="output format")
        p.add_argument("--output", help="write the record to this path instead of stdout")
        p.add_argument("--show-config", action="store_true", dest="show_config",
                       help="print the resolved configuration and exit")
        p.add_argument("--b-max", type=int, dest="b_max", help="series/oracle truncation order")
        p.add_argument("--n-max", type=int, dest="n_max", help="oracle window size")
        p.add_argument("--oracle-tol", type=float, dest="oracle_tol",
                       help="oracle sweep convergence tolerance")

    p_mean = sub.add_parser("mean", help="analytic mean batch sojourn time")
    add_common(p_mean)
    p_mean.add_argument("--check", choices=("oracle",), help="cross-check against the oracle")

    p_lap = sub.add_parser("laplace", help="batch sojourn transform on an s-grid")
    add_common(p_lap)
    p_lap.add_argument("--s", help="comma-separated increasing s values (>= 0)")
    p_lap.add_argument("--check", choices=("oracle",), help="cross-check against the oracle")

    p_ccdf = sub.add_parser("ccdf", help="tail probabilities P(sojourn > t)")
    add_common(p_ccdf)
    p_ccdf.add_argument("--t", help="comma-separated increasing positive times")
    p_ccdf.add_argument("--order", type=int, help="inversion order (even, default 12)")

    p_sim = sub.add_parser("simulate", help="Monte Carlo sojourn estimate")
    add_common(p_sim)
    p_sim.add_argument("--reps", type=int, help="number of replications")
    p_sim.add_argument("--seed", type=int, help="64-bit RNG seed")
    p_sim.add_argument("--mode", choices=("batch", "job"), help="tagged entity")

    p_stat = sub.add_parser("stationary", help="stationary queue-length probabilities")
    add_common(p_stat)
    p_stat.add_argument("--n", type=int, help="queue length to evaluate")

    p_val = sub.add_parser("validate", help="run the cross-route validation suite")
    add_common(p_val)
    p_val.add_argument("--quick", action="store_true", help="subset finishing in under 30 s")
    p_val.add_argument(
        "--perturb-q-coefficient",
        type=float,
        dest="perturb_q_coefficient",
        help="fault injection: scale the closed-form route by (1+eps)",
    )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        show = getattr(args, "show_config", False)
        cfg = _resolve_config(args, require_params=not show)
        if show:
            clean = {k: v for k, v in cfg.items() if k != "command"}
            print(json.dumps(clean, indent=2))
            return _EXIT_OK
        record, code = _COMMANDS[args.command](cfg)
        _emit(record, cfg)
        return code
    except (DomainError, StabilityViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_DOMAIN
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except PsbatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
