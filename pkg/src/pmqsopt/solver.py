"""Outer loop of the proximal multiplier method with parameter scheduling.

Each outer iteration draws a fresh scenario batch, builds the quadratic
model at the current iterate, minimizes the proximal augmented Lagrangian
over the box, and applies the projected multiplier update
``lam_i <- [lam_i + sigma * q_i(x_new)]_+``.  The loop is strictly
sequential in t; independent seeds may run concurrently.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import metrics as _metrics
from .core import AlgoConstants, Array, StochasticProblem, project_box
from .qmodel import build_model, eval_model
from .rng import named_stream
from .subproblem import ApgSettings, SubproblemSpec, solve_apg

SCHEDULE_MODES = ("theorem", "practical", "custom")

#: Subproblem residuals above this are counted as solver warnings on the run.
SUBPROBLEM_RESIDUAL_WARN = 1e-3


@dataclass(frozen=True)
class ParamSchedule:
    """Outer-loop parameters ``(sigma, alpha, tau)`` for horizon ``T``.

    ``theorem`` mode uses the rate-optimal scaling ``sigma = T^(-3/4)``,
    ``alpha = beta * T^(1/4)``, ``tau = T^(1/2)``; ``practical`` uses the
    finite-horizon choice ``sigma = T^(-1/2)``, ``alpha = beta * T^(1/2)``,
    ``tau = T^(1/2)``; ``custom`` takes all three explicitly.
    """

    T: int
    beta: float
    sigma: float
    alpha: float
    tau: float
    mode: str

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"horizon must be >= 1, got {self.T}")
        if not (self.sigma > 0 and self.alpha > 0 and self.tau > 0):
            raise ValueError("sigma, alpha, tau must all be positive")


def schedule_params(
    T: int,
    beta: float = 1.0,
    mode: str = "theorem",
    sigma: Optional[float] = None,
    alpha: Optional[float] = None,
    tau: Optional[float] = None,
) -> ParamSchedule:
    """Build the parameter schedule for horizon ``T``."""
    if mode not in SCHEDULE_MODES:
        raise ValueError(f"mode must be one of {SCHEDULE_MODES}, got {mode!r}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if mode == "theorem":
        sigma = float(T) ** -0.75
        alpha = beta * float(T) ** 0.25
        tau = math.sqrt(float(T))
    elif mode == "practical":
        sigma = float(T) ** -0.5
        alpha = beta * math.sqrt(float(T))
        tau = math.sqrt(float(T))
    else:
        if sigma is None or alpha is None or tau is None:
            raise ValueError("custom mode requires explicit sigma, alpha and tau")
    return ParamSchedule(T=int(T), beta=float(beta), sigma=float(sigma),
                         alpha=float(alpha), tau=float(tau), mode=mode)


def check_horizon(T: int, constants: AlgoConstants, problem: StochasticProblem) -> list[str]:
    """Diagnostic check of the horizon conditions behind the rate guarantee.

    Returns one warning string per violated condition; violations never
    abort a run, since practical finite-horizon configurations routinely
    sit outside the strict constants regime.
    """
    warns = []
    p = problem.num_constraints
    d0 = problem.domain.diameter
    beta = constants.beta
    if not T > beta**2:
        warns.append(f"horizon T={T} does not exceed beta^2={beta**2:.6g}")
    thresh = p * (problem.kappa_g + constants.kappa_sigma * d0 / 2.0) ** 2 / beta
    if not T > thresh:
        warns.append(
            f"horizon T={T} does not exceed p*(kappa_g + kappa_sigma*D0/2)^2/beta={thresh:.6g}"
        )
    if not T > (constants.kappa_sigma * constants.gamma2) ** 4:
        warns.append(
            f"horizon T={T} does not exceed (kappa_sigma*gamma2)^4="
            f"{(constants.kappa_sigma * constants.gamma2) ** 4:.6g}"
        )
    if problem.slater_margin is not None:
        if math.sqrt(p) * constants.kappa_sigma > problem.slater_margin:
            warns.append(
                f"sqrt(p)*kappa_sigma={math.sqrt(p) * constants.kappa_sigma:.6g} exceeds "
                f"the Slater margin {problem.slater_margin:.6g}"
            )
    return warns


def dual_update(lam: Array, sigma: float, q_vals: Array) -> Array:
    """Projected multiplier step ``[lam + sigma * q]_+`` elementwise."""
    return np.maximum(np.asarray(lam, dtype=float) + sigma * np.asarray(q_vals, dtype=float), 0.0)


@dataclass(frozen=True)
class IterateState:
    """Primal-dual iterate ``(x, lam)`` at outer step ``t``."""

    x: Array
    lam: Array
    t: int


@dataclass
class LogRow:
    """One logged iterate: quantities at ``(x_t, lam_t)`` plus the statistics
    of the subproblem solved at step t.

    ``kkt_sq``/``comp`` are the raw residuals at this iterate and
    ``r_kkt_sq``/``r_cons``/``r_comp_abs`` the running averages accumulated
    so far (exact prefix means when metrics run at every iteration,
    retained-subsequence means otherwise); all are ``None`` when metrics
    were not evaluated."""

    t: int
    grad_evals: int
    objective: float
    feasibility: float
    lambda_norm: float
    kkt_sq: Optional[float]
    comp: Optional[float]
    r_kkt_sq: Optional[float]
    r_cons: Optional[float]
    r_comp_abs: Optional[float]
    inner_iters: int
    subproblem_residual: float


@dataclass
class RunRecord:
    """Everything a run produced: config snapshot, logged rows, optional
    retained iterates (needed for output selection and post-hoc metrics),
    and the final state ``(x_{T+1}, lam_{T+1})``."""

    seed: int
    config: dict
    schedule: ParamSchedule
    rows: list[LogRow]
    metric_mode: str
    metric_alpha: Optional[float]
    final_x: Array
    final_lam: Array
    iterates_x: Optional[Array] = None
    iterates_lam: Optional[Array] = None
    solver_warnings: int = 0
    wall_time: float = 0.0

    def metric_rows(self) -> list[_metrics.ResidualSample]:
        """Residual samples of the rows where metrics were evaluated."""
        return [
            _metrics.ResidualSample(t=r.t, kkt_sq=r.kkt_sq, cons=r.feasibility, comp=r.comp)
            for r in self.rows
            if r.kkt_sq is not None
        ]


def log_grid(T: int, points: str | int = "geom:100") -> np.ndarray:
    """Logged iteration indices: ``"all"``, an integer stride, or
    ``"geom:N"`` for ~N geometrically spaced values of t.  Always includes
    1 and T."""
    if points == "all":
        return np.arange(1, T + 1)
    if isinstance(points, int):
        if points < 1:
            raise ValueError("stride must be >= 1")
        grid = np.arange(1, T + 1, points)
        return np.unique(np.append(grid, T))
    if isinstance(points, str) and points.startswith("geom:"):
        count = int(points.split(":", 1)[1])
        grid = np.unique(np.rint(np.geomspace(1, T, num=min(count, T))).astype(int))
        return np.unique(np.append(grid, [1, T]))
    raise ValueError(f"unrecognized log grid spec {points!r}")


def default_start(problem: StochasticProblem, choice: str = "auto") -> Array:
    """Resolve a named start point: ``auto`` (Slater point when present,
    else box center), ``center``, ``slater`` or ``reference``."""
    if choice == "auto":
        if problem.slater_point is not None:
            return np.asarray(problem.slater_point, dtype=float)
        return np.zeros(problem.dim)
    if choice == "center":
        return np.zeros(problem.dim)
    if choice == "slater":
        if problem.slater_point is None:
            raise ValueError("problem has no Slater point")
        return np.asarray(problem.slater_point, dtype=float)
    if choice == "reference":
        if problem.reference_point is None:
            raise ValueError("problem has no reference point")
        return np.asarray(problem.reference_point, dtype=float)
    raise ValueError(f"unknown start point {choice!r}")


def run_pmqsopt(
    problem: StochasticProblem,
    schedule: ParamSchedule,
    seed: int = 0,
    batch_size: int = 1,
    apg: Optional[ApgSettings] = None,
    log_points: str | int = "geom:100",
    metric_mode: str = "map",
    metric_points: str = "logged",
    metric_alpha: Optional[float] = None,
    retain_iterates: bool = False,
    x1: Optional[Array] = None,
    hessian_mode: str = "step1",
    curvature_margin: float = 0.0,
) -> RunRecord:
    """Run the outer loop for ``schedule.T`` iterations.

    ``x1`` defaults to the problem's strictly feasible point when present,
    else the box center.  ``metric_mode`` selects how the stationarity
    residual is measured ("map", "moreau" or "none") and ``metric_points``
    where: ``"logged"`` evaluates at logged iterates only, so running
    averages are over the retained subsequence; ``"all"`` evaluates at every
    iteration and the logged running averages are exact prefix means (cheap
    in "map" mode, expensive in "moreau" mode).  ``metric_alpha`` defaults
    to the schedule's alpha.  With ``retain_iterates`` the full
    (x_t, lam_t) history is stored, enabling :func:`select_output` and
    post-hoc metric evaluation.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if metric_mode not in ("none",) + _metrics.KKT_MODES:
        raise ValueError(f"metric_mode must be 'none' or one of {_metrics.KKT_MODES}")
    if metric_points not in ("logged", "all"):
        raise ValueError("metric_points must be 'logged' or 'all'")

    n, p, T = problem.dim, problem.num_constraints, schedule.T
    if x1 is None:
        x1 = default_start(problem, "auto")
    x = project_box(np.asarray(x1, dtype=float), problem.domain)
    lam = np.zeros(p)

    alpha_met = schedule.alpha if metric_alpha is None else float(metric_alpha)
    sample_rng = named_stream(seed, "samples")
    logged = set(int(t) for t in log_grid(T, log_points))
    metrics_on = metric_mode != "none"

    rows: list[LogRow] = []
    xs = np.empty((T, n)) if retain_iterates else None
    lams = np.empty((T, p)) if retain_iterates else None
    metric_count = 0
    sum_kkt = sum_cons = sum_comp = 0.0
    solver_warnings = 0
    apg_settings = apg if apg is not None else ApgSettings()
    lipschitz0 = apg_settings.initial_lipschitz
    start = time.perf_counter()

    for t in range(1, T + 1):
        if retain_iterates:
            xs[t - 1] = x
            lams[t - 1] = lam
        batch = sample_rng.integers(0, problem.num_samples, size=batch_size)
        model = build_model(
            problem, x, lam, batch,
            tau=schedule.tau, sigma=schedule.sigma, alpha=schedule.alpha,
            curvature_margin=curvature_margin, hessian_mode=hessian_mode,
        )
        spec = SubproblemSpec(model, problem.domain)
        result = solve_apg(spec, apg_settings, x_start=x, initial_lipschitz=lipschitz0)
        if apg_settings.carry_lipschitz:
            lipschitz0 = result.lipschitz
        if result.residual > SUBPROBLEM_RESIDUAL_WARN:
            solver_warnings += 1
        _, q_vals = eval_model(model, result.x)
        lam_next = dual_update(lam, schedule.sigma, q_vals)

        log_now = t in logged
        sample = None
        if metrics_on and (metric_points == "all" or log_now):
            sample = _metrics.residual_row(problem, x, lam, alpha_met, mode=metric_mode, t=t)
            metric_count += 1
            sum_kkt += sample.kkt_sq
            sum_cons += sample.cons
            sum_comp += sample.comp
        if log_now:
            if sample is not None:
                feas = sample.cons
            else:
                g = problem.constraint_mean(x)
                feas = float(np.sum(np.maximum(g, 0.0)))
            rows.append(LogRow(
                t=t,
                grad_evals=t * batch_size * (1 + p),
                objective=problem.objective_mean(x),
                feasibility=feas,
                lambda_norm=float(np.linalg.norm(lam)),
                kkt_sq=sample.kkt_sq if sample else None,
                comp=sample.comp if sample else None,
                r_kkt_sq=sum_kkt / metric_count if sample else None,
                r_cons=sum_cons / metric_count if sample else None,
                r_comp_abs=abs(sum_comp) / metric_count if sample else None,
                inner_iters=result.iterations,
                subproblem_residual=result.residual,
            ))

        x, lam = result.x, lam_next

    elapsed = time.perf_counter() - start
    if solver_warnings:
        warnings.warn(
            f"{solver_warnings} subproblem solve(s) ended above residual "
            f"{SUBPROBLEM_RESIDUAL_WARN:g}", RuntimeWarning,
        )
    config = {
        "seed": int(seed),
        "batch_size": int(batch_size),
        "log_points": log_points,
        "metric_mode": metric_mode,
        "metric_points": metric_points,
        "metric_alpha": alpha_met if metrics_on else None,
        "running_average_base": (
            None if not metrics_on
            else "all_iterations" if metric_points == "all"
            else "retained_subsequence"
        ),
        "retain_iterates": bool(retain_iterates),
        "hessian_mode": hessian_mode,
        "curvature_margin": float(curvature_margin),
        "problem": problem.name,
    }
    return RunRecord(
        seed=int(seed), config=config, schedule=schedule, rows=rows,
        metric_mode=metric_mode, metric_alpha=alpha_met if metrics_on else None,
        final_x=x, final_lam=lam, iterates_x=xs, iterates_lam=lams,
        solver_warnings=solver_warnings, wall_time=elapsed,
    )


def select_output(record: RunRecord, seed: Optional[int] = None) -> IterateState:
    """Uniformly random iterate ``(x_R, lam_R)``, ``R in {1..T}``, drawn from
    the run's output-selection stream.  Requires the run to have retained
    its iterates at stride 1."""
    if record.iterates_x is None:
        raise ValueError(
            "run did not retain iterates; rerun with retain_iterates=True "
            "(stride-1 retention) to enable output selection"
        )
    seed = record.seed if seed is None else seed
    rng = named_stream(seed, "output")
    index = int(rng.integers(1, record.schedule.T + 1))
    return IterateState(
        x=record.iterates_x[index - 1].copy(),
        lam=record.iterates_lam[index - 1].copy(),
        t=index,
    )
