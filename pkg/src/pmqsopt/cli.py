"""Command-line front end: generate instances, run experiments over seeds,
fit residual slopes, and re-evaluate metrics on retained iterates.

Configuration is a flat ``key = value`` text file plus ``--set key=value``
overrides; ``run`` also accepts a previously written ``manifest.json``,
which reproduces the exact per-seed CSVs.  Numbers are serialized with 17
significant digits so per-binary determinism is auditable.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import AlgoConstants, compute_constants
from .metrics import fit_power_law, residual_row
from .problems import GENERATORS, INSTANCE_MAKERS, load_instance, problem_from_instance, save_instance
from .solver import check_horizon, default_start, log_grid, run_pmqsopt, schedule_params
from .subproblem import ApgSettings

MANIFEST_SCHEMA_VERSION = 1

#: Exact column order of every emitted CSV.
CSV_HEADER = (
    "t,grad_evals,objective,feasibility,lambda_norm,"
    "r_kkt_sq,r_cons,r_comp_abs,inner_iters,subproblem_residual"
)

GRAD_COUNT_NOTE = (
    "grad_evals counts batch * (1 + num_constraints) stochastic gradient "
    "evaluations per outer iteration (one objective gradient plus one per "
    "constraint, per sample)"
)


class ConfigError(Exception):
    """Invalid or incomplete run configuration."""


_RUN_DEFAULTS = {
    "family": None,
    "instance": None,
    "instance_seed": 0,
    "T": None,
    "mode": "theorem",
    "beta": 1.0,
    "sigma": None,
    "alpha": None,
    "tau": None,
    "batch": 1,
    "seeds": (0,),
    "x1": "auto",
    "metric_mode": "map",
    "metric_points": "logged",
    "metric_alpha": "schedule",
    "log_points": "geom:100",
    "retain_iterates": False,
    "hessian_mode": "step1",
    "curvature_margin": 0.0,
    "eta": 2.0,
    "apg_tol": None,
    "apg_max_iter": 2000,
    "carry_lipschitz": False,
    "out": "runs",
}


def parse_value(text: str):
    """Coerce a config token: int, float, bool, comma tuple, or string."""
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("", "none"):
        return None
    if "," in text:
        return tuple(parse_value(part) for part in text.split(","))
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_config_file(path: Path) -> dict:
    """Read a flat key = value config file, or pull the config out of a
    previously written run manifest (JSON)."""
    text = path.read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        config = doc.get("config", doc)
        return {k: tuple(v) if isinstance(v, list) else v for k, v in config.items()}
    config = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = parse_value(value)
    return config


def _generator_params(family: str) -> set[str]:
    sig = inspect.signature(INSTANCE_MAKERS[family])
    return {name for name in sig.parameters if name != "seed"}


def resolve_run_config(config: dict) -> dict:
    """Fill defaults and validate keys/values, returning the full config."""
    resolved = dict(_RUN_DEFAULTS)
    family = config.get("family", resolved["family"])
    gen_keys = set()
    if family is not None:
        if family not in GENERATORS:
            raise ConfigError(f"unknown problem family {family!r}; "
                              f"expected one of {sorted(GENERATORS)}")
        gen_keys = _generator_params(family)
    unknown = set(config) - set(_RUN_DEFAULTS) - gen_keys
    if unknown:
        raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
    resolved.update(config)
    if resolved["instance"] is None and resolved["family"] is None:
        raise ConfigError("missing required field: family (or instance)")
    if resolved["T"] is None:
        raise ConfigError("missing required field: T")
    seeds = resolved["seeds"]
    if isinstance(seeds, (int, np.integer)):
        seeds = (int(seeds),)
    if not seeds:
        raise ConfigError("seeds must be nonempty")
    resolved["seeds"] = tuple(int(s) for s in seeds)
    if int(resolved["T"]) < 1:
        raise ConfigError("T must be >= 1")
    if int(resolved["batch"]) < 1:
        raise ConfigError("batch must be >= 1")
    return resolved


def build_problem(config: dict):
    """Instantiate the scenario problem named by the config."""
    if config.get("instance"):
        inst = load_instance(config["instance"])
        return problem_from_instance(inst)
    family = config["family"]
    params = {k: config[k] for k in _generator_params(family) if k in config}
    return GENERATORS[family](int(config["instance_seed"]), **params)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_rows_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(",".join([
                _format(r.t), _format(r.grad_evals), _format(r.objective),
                _format(r.feasibility), _format(r.lambda_norm),
                _format(r.r_kkt_sq), _format(r.r_cons), _format(r.r_comp_abs),
                _format(r.inner_iters), _format(r.subproblem_residual),
            ]) + "\n")


def write_aggregate_csv(path: Path, per_seed_rows: list) -> None:
    """Across-seed arithmetic mean per logged t; strides are config-fixed so
    rows align one-to-one."""
    lengths = {len(rows) for rows in per_seed_rows}
    if len(lengths) != 1:
        raise RuntimeError("per-seed logs have mismatched lengths; cannot aggregate")
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for group in zip(*per_seed_rows):
            ts = {r.t for r in group}
            if len(ts) != 1:
                raise RuntimeError("per-seed logs have mismatched t grids")
            cells = [_format(group[0].t), _format(group[0].grad_evals)]
            for field in ("objective", "feasibility", "lambda_norm",
                          "r_kkt_sq", "r_cons", "r_comp_abs",
                          "inner_iters", "subproblem_residual"):
                values = [getattr(r, field) for r in group]
                if any(v is None for v in values):
                    cells.append("")
                else:
                    cells.append(_format(float(np.mean([float(v) for v in values]))))
            fh.write(",".join(cells) + "\n")


def run_experiment(config: dict, out_dir: Path) -> dict:
    """Execute a full multi-seed experiment; returns the manifest."""
    config = resolve_run_config(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(config)
    constants = compute_constants(problem)
    beta = constants.beta if config["beta"] == "auto" else float(config["beta"])
    schedule = schedule_params(
        int(config["T"]), beta, config["mode"],
        sigma=config["sigma"], alpha=config["alpha"], tau=config["tau"],
    )
    effective = AlgoConstants(gamma1=constants.gamma1, gamma2=constants.gamma2,
                              kappa_sigma=constants.kappa_sigma, beta=schedule.beta)
    horizon_warnings = check_horizon(schedule.T, effective, problem)
    apg = ApgSettings(
        eta=float(config["eta"]),
        tol=config["apg_tol"],
        max_iter=int(config["apg_max_iter"]),
        carry_lipschitz=bool(config["carry_lipschitz"]),
    )
    x1 = default_start(problem, config["x1"])
    metric_alpha = None if config["metric_alpha"] == "schedule" else float(config["metric_alpha"])

    seed_entries = []
    per_seed_rows = []
    for seed in config["seeds"]:
        record = run_pmqsopt(
            problem, schedule, seed=seed, batch_size=int(config["batch"]),
            apg=apg, log_points=config["log_points"],
            metric_mode=config["metric_mode"], metric_points=config["metric_points"],
            metric_alpha=metric_alpha, retain_iterates=bool(config["retain_iterates"]),
            x1=x1, hessian_mode=config["hessian_mode"],
            curvature_margin=float(config["curvature_margin"]),
        )
        csv_name = f"run_seed{seed}.csv"
        write_rows_csv(out_dir / csv_name, record.rows)
        entry = {
            "seed": seed,
            "csv": csv_name,
            "wall_time": record.wall_time,
            "solver_warnings": record.solver_warnings,
        }
        if record.iterates_x is not None:
            npz_name = f"iterates_seed{seed}.npz"
            np.savez_compressed(out_dir / npz_name, x=record.iterates_x,
                                lam=record.iterates_lam)
            entry["iterates"] = npz_name
        seed_entries.append(entry)
        per_seed_rows.append(record.rows)

    write_aggregate_csv(out_dir / "aggregate.csv", per_seed_rows)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in config.items()},
        "constants": {
            "gamma1": constants.gamma1,
            "gamma2": constants.gamma2,
            "kappa_sigma": constants.kappa_sigma,
            "beta_formula": constants.beta,
        },
        "schedule": {
            "T": schedule.T, "beta": schedule.beta, "sigma": schedule.sigma,
            "alpha": schedule.alpha, "tau": schedule.tau, "mode": schedule.mode,
        },
        "metric_alpha_used": metric_alpha if metric_alpha is not None else schedule.alpha,
        "horizon_warnings": horizon_warnings,
        "grad_count_note": GRAD_COUNT_NOTE,
        "seeds": seed_entries,
        "aggregate_csv": "aggregate.csv",
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def read_csv_column(paths: Sequence[Path], column: str) -> list[tuple[float, float]]:
    """Collect (t, value) pairs of one column across CSV files, skipping
    rows where the column is empty."""
    header = CSV_HEADER.split(",")
    if column not in header:
        raise ConfigError(f"column {column!r} not in schema; available: {header}")
    points = []
    for path in paths:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != header:
                raise ConfigError(
                    f"{path} does not match the run CSV schema; header is {reader.fieldnames}"
                )
            for row in reader:
                cell = row[column]
                if cell != "":
                    points.append((float(row["t"]), float(cell)))
    return points


def slope_report(
    paths: Sequence[Path],
    column: str,
    t_min: float = 1.0,
    t_max: float = float("inf"),
    out: Optional[Path] = None,
    reference_exponent: float = -0.25,
) -> tuple[float, float]:
    """Fit the power-law slope of ``column`` over ``[t_min, t_max]`` and
    optionally emit the fitted plus reference curves as a CSV."""
    points = [(t, v) for t, v in read_csv_column(paths, column) if t_min <= t <= t_max]
    if not points:
        raise RuntimeError(
            f"no usable {column} values in t range [{t_min}, {t_max}]"
        )
    slope, intercept = fit_power_law(points)
    if out is not None:
        t0, v0 = points[0]
        with open(out, "w", newline="") as fh:
            fh.write("t,value,fitted,reference\n")
            for t, v in points:
                fitted = float(np.exp(intercept) * t**slope)
                reference = v0 * (t / t0) ** reference_exponent
                fh.write(f"{_format(t)},{_format(v)},{_format(fitted)},{_format(reference)}\n")
    return slope, intercept


def reevaluate_metrics(
    manifest_path: Path,
    seed: int,
    out: Path,
    mode: Optional[str] = None,
    alpha: Optional[float] = None,
    points: str | int = "all",
) -> None:
    """Recompute residual metrics on a run's retained iterates and write a
    schema CSV (subproblem statistics cells are left empty)."""
    doc = json.loads(Path(manifest_path).read_text())
    config = resolve_run_config(
        {k: tuple(v) if isinstance(v, list) else v for k, v in doc["config"].items()}
    )
    entry = next((e for e in doc["seeds"] if e["seed"] == seed), None)
    if entry is None:
        raise RuntimeError(f"seed {seed} not found in manifest")
    if "iterates" not in entry:
        raise RuntimeError(
            "run did not retain iterates; rerun with retain_iterates = true"
        )
    data = np.load(Path(manifest_path).parent / entry["iterates"])
    xs, lams = data["x"], data["lam"]
    problem = build_problem(config)
    mode = mode or config["metric_mode"]
    if mode == "none":
        mode = "map"
    if alpha is None:
        alpha = float(doc.get("metric_alpha_used", doc["schedule"]["alpha"]))
    T = xs.shape[0]
    batch = int(config["batch"])
    p = problem.num_constraints

    class _Row:
        pass

    rows = []
    count = 0
    sum_kkt = sum_cons = sum_comp = 0.0
    for t in log_grid(T, points):
        t = int(t)
        sample = residual_row(problem, xs[t - 1], lams[t - 1], alpha, mode=mode, t=t)
        count += 1
        sum_kkt += sample.kkt_sq
        sum_cons += sample.cons
        sum_comp += sample.comp
        row = _Row()
        row.t = t
        row.grad_evals = t * batch * (1 + p)
        row.objective = problem.objective_mean(xs[t - 1])
        row.feasibility = sample.cons
        row.lambda_norm = float(np.linalg.norm(lams[t - 1]))
        row.r_kkt_sq = sum_kkt / count
        row.r_cons = sum_cons / count
        row.r_comp_abs = abs(sum_comp) / count
        row.inner_iters = None
        row.subproblem_residual = None
        rows.append(row)
    write_rows_csv(out, rows)


# ---------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="flat key = value config file (or a run manifest)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (repeatable)")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed shortcut (generate: instance seed; run: single run seed)")
    parser.add_argument("--out", type=Path, default=None, help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmqsopt",
        description="Proximal multiplier method experiments on scenario problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a problem instance JSON")
    _add_common(p_gen)
    p_gen.add_argument("--family", choices=sorted(GENERATORS), default=None)

    p_run = sub.add_parser("run", help="run the solver over seeds, emit CSVs + manifest")
    _add_common(p_run)

    p_slope = sub.add_parser("slope", help="fit a power-law slope on CSV columns")
    _add_common(p_slope)
    p_slope.add_argument("--csv", type=Path, action="append", required=True,
                         help="input CSV (repeatable)")
    p_slope.add_argument("--column", default="r_kkt_sq")
    p_slope.add_argument("--tmin", type=float, default=1.0)
    p_slope.add_argument("--tmax", type=float, default=float("inf"))
    p_slope.add_argument("--reference-exponent", type=float, default=-0.25)

    p_met = sub.add_parser("metrics", help="re-evaluate metrics on retained iterates")
    _add_common(p_met)
    p_met.add_argument("--manifest", type=Path, required=True)
    p_met.add_argument("--mode", choices=("map", "moreau"), default=None)
    p_met.add_argument("--alpha", type=float, default=None)
    p_met.add_argument("--points", default="all",
                       help="evaluation grid: all, an integer stride, or geom:N")

    return parser


def _gather_config(args) -> dict:
    config = {}
    if args.config is not None:
        config.update(load_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        config[key.strip()] = parse_value(value)
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            config = _gather_config(args)
            family = args.family or config.get("family")
            if family is None:
                raise ConfigError("missing required field: family")
            if family not in GENERATORS:
                raise ConfigError(f"unknown problem family {family!r}")
            seed = args.seed if args.seed is not None else int(config.get("instance_seed", 0))
            params = {k: config[k] for k in _generator_params(family) if k in config}
            extra = set(config) - _generator_params(family) - {"family", "instance_seed"}
            if extra - set(_RUN_DEFAULTS):
                raise ConfigError(f"unknown config field(s): {sorted(extra - set(_RUN_DEFAULTS))}")
            inst = INSTANCE_MAKERS[family](seed, **params)
            out = args.out or Path(f"{family}_seed{seed}.json")
            save_instance(inst, out)
            print(f"wrote {out}")
        elif args.command == "run":
            config = _gather_config(args)
            if args.seed is not None:
                config["seeds"] = (args.seed,)
            out_dir = args.out or Path(config.get("out", _RUN_DEFAULTS["out"]))
            started = time.perf_counter()
            manifest = run_experiment(config, Path(out_dir))
            elapsed = time.perf_counter() - started
            for warning in manifest["horizon_warnings"]:
                print(f"warning: {warning}", file=sys.stderr)
            print(f"wrote {len(manifest['seeds'])} run(s) to {out_dir} "
                  f"in {elapsed:.1f}s")
        elif args.command == "slope":
            slope, intercept = slope_report(
                args.csv, args.column, args.tmin, args.tmax, out=args.out,
                reference_exponent=args.reference_exponent,
            )
            print(f"column={args.column} slope={slope:.12g} intercept={intercept:.12g}")
            if args.out:
                print(f"wrote {args.out}")
        elif args.command == "metrics":
            if args.seed is None:
                raise ConfigError("metrics requires --seed")
            out = args.out or Path(f"metrics_seed{args.seed}.csv")
            reevaluate_metrics(args.manifest, args.seed, out, mode=args.mode,
                               alpha=args.alpha, points=parse_value(str(args.points)))
            print(f"wrote {out}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
