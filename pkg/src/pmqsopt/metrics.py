"""Stationarity residuals: gradient map, Moreau-envelope gradient,
constraint violation and complementarity, plus running averages and
power-law slope fits.

All quantities are evaluated against the exact finite-sum expectations of
the problem, never against samples, so metric noise is limited to solver
tolerance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Array, StochasticProblem, positive_part, project_box
from .subproblem import apg_minimize

KKT_MODES = ("map", "moreau")

#: Fixed projected-gradient tolerance of the full-batch prox solve; sits well
#: below the smallest reportable residual.
PROX_TOL = 1e-9


@dataclass(frozen=True)
class ResidualSample:
    """Residual triple at one retained iterate.

    ``kkt_sq`` is the squared stationarity residual (gradient-map or
    Moreau-gradient norm, per the evaluation mode), ``cons`` the total
    constraint violation ``sum_i [g_i(x)]_+`` and ``comp`` the
    complementarity value ``<lam, g(x)>``.
    """

    t: int
    kkt_sq: float
    cons: float
    comp: float


def lagrangian_grad(problem: StochasticProblem, x: Array, lam: Array) -> Array:
    """Exact full gradient ``grad f(x) + sum_i lam_i grad g_i(x)``."""
    lam = np.asarray(lam, dtype=float)
    grad = problem.objective_grad_mean(x)
    if problem.num_constraints:
        grad = grad + problem.constraint_jac_mean(x).T @ lam
    return grad


def kkt_map(problem: StochasticProblem, x: Array, lam: Array, alpha_met: float) -> Array:
    """Gradient map ``alpha [x - proj(x - grad L(x, lam) / alpha)]``;
    zero exactly at KKT-stationary primal points."""
    x = np.asarray(x, dtype=float)
    grad = lagrangian_grad(problem, x, lam)
    return alpha_met * (x - project_box(x - grad / alpha_met, problem.domain))


def prox_point(
    problem: StochasticProblem,
    x: Array,
    lam: Array,
    alpha_met: float,
    tol: float = PROX_TOL,
    max_iter: int = 50_000,
    x_start: Array | None = None,
) -> Array:
    """Minimizer of ``L(z, lam) + alpha ||z - x||^2 / 2`` over the box,
    computed by a deterministic full-batch accelerated projected gradient
    solve.  Requires ``alpha_met`` to exceed the weak-convexity modulus of
    the Lagrangian so the prox problem is strongly convex.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    modulus = problem.lagrangian_modulus(lam)
    if not alpha_met > modulus:
        raise ValueError(
            f"alpha_met={alpha_met} must exceed the Lagrangian weak-convexity "
            f"modulus {modulus} at this multiplier for the prox to be strongly convex"
        )

    def value(z: Array) -> float:
        val = problem.objective_mean(z)
        if problem.num_constraints:
            val += float(lam @ problem.constraint_mean(z))
        diff = z - x
        return val + 0.5 * alpha_met * float(diff @ diff)

    def grad(z: Array) -> Array:
        return lagrangian_grad(problem, z, lam) + alpha_met * (z - x)

    result = apg_minimize(
        value=value,
        grad=grad,
        project=lambda z: np.clip(z, -problem.domain.radius, problem.domain.radius),
        x0=x if x_start is None else np.asarray(x_start, dtype=float),
        tol=tol,
        max_iter=max_iter,
    )
    if not result.converged:
        warnings.warn(
            f"prox solve stopped at residual {result.residual:.3e} after "
            f"{result.iterations} iterations (target {tol:.1e})",
            RuntimeWarning,
        )
    return result.x


def moreau_grad(
    problem: StochasticProblem,
    x: Array,
    lam: Array,
    alpha_met: float,
    tol: float = PROX_TOL,
    max_iter: int = 50_000,
) -> Array:
    """Gradient of the Moreau envelope (parameter ``1/alpha``) of the
    box-restricted Lagrangian: ``alpha (x - prox(x))``."""
    z = prox_point(problem, x, lam, alpha_met, tol=tol, max_iter=max_iter)
    return alpha_met * (np.asarray(x, dtype=float) - z)


def residual_row(
    problem: StochasticProblem,
    x: Array,
    lam: Array,
    alpha_met: float,
    mode: str = "map",
    t: int = 0,
) -> ResidualSample:
    """Evaluate the residual triple at ``(x, lam)``.

    ``mode="map"`` squares the gradient-map norm at ``alpha_met``;
    ``mode="moreau"`` squares the Moreau-envelope gradient norm, which costs
    a full prox solve.
    """
    if mode not in KKT_MODES:
        raise ValueError(f"mode must be one of {KKT_MODES}, got {mode!r}")
    lam = np.asarray(lam, dtype=float)
    if mode == "map":
        r = kkt_map(problem, x, lam, alpha_met)
    else:
        r = moreau_grad(problem, x, lam, alpha_met)
    g = problem.constraint_mean(x)
    cons = float(np.sum(positive_part(g)))
    comp = float(lam @ g) if problem.num_constraints else 0.0
    return ResidualSample(t=int(t), kkt_sq=float(r @ r), cons=cons, comp=comp)


def running_averages(rows: Sequence[ResidualSample]) -> tuple[Array, Array, Array]:
    """Prefix means of the residuals over the retained subsequence.

    Returns ``(r_kkt_sq, r_cons, r_comp_abs)`` arrays aligned with ``rows``;
    the complementarity average is reported in absolute value.  When the
    rows were logged at a stride, these are averages over the retained
    subsequence, not over all iterations.
    """
    if len(rows) == 0:
        raise ValueError("rows must be nonempty")
    counts = np.arange(1, len(rows) + 1, dtype=float)
    kkt = np.cumsum([r.kkt_sq for r in rows]) / counts
    cons = np.cumsum([r.cons for r in rows]) / counts
    comp_abs = np.abs(np.cumsum([r.comp for r in rows]) / counts)
    return kkt, cons, comp_abs


def fit_power_law(points: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line through ``(log T, log value)``.

    Nonpositive values are dropped with a warning; at least two usable
    points are required.  Returns ``(slope, intercept)`` of the fit
    ``log value = slope * log T + intercept``.
    """
    pts = [(float(t), float(v)) for t, v in points]
    usable = [(t, v) for t, v in pts if v > 0 and t > 0]
    dropped = len(pts) - len(usable)
    if dropped:
        warnings.warn(f"dropped {dropped} nonpositive point(s) from power-law fit", RuntimeWarning)
    if len(usable) < 2:
        raise ValueError("power-law fit needs at least two positive points")
    log_t = np.log([t for t, _ in usable])
    log_v = np.log([v for _, v in usable])
    slope, intercept = np.polyfit(log_t, log_v, 1)
    return float(slope), float(intercept)
