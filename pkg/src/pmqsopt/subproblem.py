"""Strongly convex proximal subproblem and its accelerated solver.

The subproblem minimizes, over the box,

    phi(x) = f0 + c0'd + d'Sigma_0 d / 2
             + sum_i [s_i + sigma (c_i'd + d'Sigma_i d / 2)]_+^2 / (2 sigma)
             + alpha ||d||^2 / 2,        d = x - x_t,

with shifted bases ``s_i = lam_i + sigma * q_i(x_t)``.  The squared positive
part makes phi continuously differentiable, and the curvature rule behind
``Sigma_0`` makes it (alpha + tau)-strongly convex, so a projected accelerated
gradient method with backtracking solves it to a certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Array, BoxDomain
from .qmodel import QuadraticModel


@dataclass
class SubproblemSpec:
    """A quadratic model paired with its box, ready for evaluation."""

    model: QuadraticModel
    domain: BoxDomain
    shifted: Array = field(init=False)
    sigma0_diag: Array = field(init=False)

    def __post_init__(self):
        if self.domain.dim != self.model.dim:
            raise ValueError("domain dimension does not match model dimension")
        self.shifted = self.model.lam + self.model.sigma * self.model.q0_values
        self.sigma0_diag = self.model.sigma0.diag()

    @property
    def strong_convexity(self) -> float:
        """Strong-convexity constant ``alpha + tau`` of the objective."""
        return self.model.alpha + self.model.tau


def eval_phi(spec: SubproblemSpec, x: Array) -> float:
    """Subproblem objective at ``x`` (feasibility not required)."""
    m = spec.model
    d = np.asarray(x, dtype=float) - m.anchor
    dd = float(d @ d)
    val = m.f0 + float(m.c0 @ d) + 0.5 * float(spec.sigma0_diag @ (d * d))
    val += 0.5 * m.alpha * dd
    if m.num_constraints:
        u = spec.shifted + m.sigma * (m.con_grads @ d + 0.5 * m.con_curv * dd)
        w = np.maximum(u, 0.0)
        val += float(w @ w) / (2.0 * m.sigma)
    return val


def grad_phi(spec: SubproblemSpec, x: Array) -> Array:
    """Gradient of the subproblem objective at ``x``."""
    return _phi_and_grad(spec, np.asarray(x, dtype=float))[1]


def _phi_and_grad(spec: SubproblemSpec, x: Array) -> tuple[float, Array]:
    m = spec.model
    d = x - m.anchor
    dd = float(d @ d)
    d2 = d * d
    val = m.f0 + float(m.c0 @ d) + 0.5 * float(spec.sigma0_diag @ d2) + 0.5 * m.alpha * dd
    grad = m.c0 + spec.sigma0_diag * d + m.alpha * d
    if m.num_constraints:
        u = spec.shifted + m.sigma * (m.con_grads @ d + 0.5 * m.con_curv * dd)
        w = np.maximum(u, 0.0)
        val += float(w @ w) / (2.0 * m.sigma)
        grad = grad + m.con_grads.T @ w + float(w @ m.con_curv) * d
    return val, grad


@dataclass(frozen=True)
class ApgSettings:
    """Inner-solver knobs.

    ``eta`` is the backtracking growth factor (> 1), ``initial_lipschitz``
    the starting stepsize constant, ``tol`` the projected-gradient stopping
    threshold (``None`` selects the sigma-scaled default), ``max_iter`` the
    iteration cap.  ``carry_lipschitz`` carries the final stepsize constant
    of one subproblem into the next instead of resetting it; ``keep_trace``
    records per-iteration backtracking data for later verification.
    """

    eta: float = 2.0
    initial_lipschitz: float = 1.0
    tol: Optional[float] = None
    max_iter: int = 2000
    monotone_restart: bool = True
    carry_lipschitz: bool = False
    keep_trace: bool = False

    def __post_init__(self):
        if not self.eta > 1:
            raise ValueError(f"eta must exceed 1, got {self.eta}")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class TraceEntry:
    """One accepted inner step: data to re-assert the sufficient decrease
    ``phi_new <= phi_y + grad_dot_step + lipschitz * step_sq / 2``."""

    k: int
    lipschitz: float
    phi_y: float
    grad_dot_step: float
    step_sq: float
    phi_new: float


@dataclass
class ApgResult:
    x: Array
    iterations: int
    residual: float
    converged: bool
    lipschitz: float = 1.0
    trace: Optional[list[TraceEntry]] = None


_LIPSCHITZ_CAP = 1e18


def apg_minimize(
    value: Callable[[Array], float],
    grad: Callable[[Array], Array],
    project: Callable[[Array], Array],
    x0: Array,
    tol: float,
    max_iter: int = 2000,
    eta: float = 2.0,
    initial_lipschitz: float = 1.0,
    monotone_restart: bool = True,
    keep_trace: bool = False,
    value_and_grad: Optional[Callable[[Array], tuple[float, Array]]] = None,
) -> ApgResult:
    """Accelerated projected gradient with backtracking on a convex objective.

    Stops when the unit-step projected-gradient residual
    ``||x - project(x - grad(x))||`` drops to ``tol`` or after ``max_iter``
    iterations, returning the final residual either way.  The Lipschitz
    estimate never decreases within one call and each accepted step
    satisfies the sufficient-decrease inequality.  The momentum is reset
    (and its counter restarted) whenever the objective increases or the
    incoming step opposes the gradient at the extrapolated point; the
    second condition breaks the limit cycles plain function-value restarts
    cannot detect once objective differences sit at roundoff level.
    """
    if value_and_grad is None:
        value_and_grad = lambda z: (value(z), grad(z))

    x = project(np.asarray(x0, dtype=float))
    val_x, g = value_and_grad(x)
    _check_finite(val_x, g)
    residual = float(np.linalg.norm(x - project(x - g)))
    if residual <= tol:
        return ApgResult(x=x, iterations=0, residual=residual, converged=True,
                         lipschitz=initial_lipschitz, trace=[] if keep_trace else None)

    y, val_y, g_y = x, val_x, g
    lipschitz = initial_lipschitz
    momentum_k = 0
    trace: Optional[list[TraceEntry]] = [] if keep_trace else None

    for k in range(max_iter):
        # backtracking: smallest i >= 0 with L = L_prev * eta^i accepted
        while True:
            x_new = project(y - g_y / lipschitz)
            step = x_new - y
            step_sq = float(step @ step)
            phi_new = value(x_new)
            bound = val_y + float(g_y @ step) + 0.5 * lipschitz * step_sq
            if phi_new <= bound + 1e-12 * (1.0 + abs(val_y)):
                break
            lipschitz *= eta
            if lipschitz > _LIPSCHITZ_CAP:
                # step is numerically zero at this point; stop growing
                break
        if not (math.isfinite(phi_new) and math.isfinite(bound)):
            raise FloatingPointError("non-finite value encountered in subproblem solve")
        if trace is not None:
            trace.append(TraceEntry(k=k, lipschitz=lipschitz, phi_y=val_y,
                                    grad_dot_step=float(g_y @ step),
                                    step_sq=step_sq, phi_new=phi_new))

        g_new = grad(x_new)
        residual = float(np.linalg.norm(x_new - project(x_new - g_new)))
        if math.isnan(residual):
            raise FloatingPointError("non-finite value encountered in subproblem solve")
        if residual <= tol:
            return ApgResult(x=x_new, iterations=k + 1, residual=residual,
                             converged=True, lipschitz=lipschitz, trace=trace)

        # curvature ratchet: once steps are tiny the sufficient-decrease test
        # drowns in roundoff and can leave the stepsize constant below the
        # true curvature, which momentum turns into a stall; the secant
        # quotient is computed from gradient differences and stays reliable
        if step_sq > 0.0:
            curvature = float((g_new - g_y) @ step) / step_sq
            if curvature > lipschitz:
                lipschitz = min(curvature, _LIPSCHITZ_CAP)

        restart = monotone_restart and (
            phi_new > val_x or float(g_y @ (x_new - x)) > 0.0
        )
        if restart:
            momentum_k = 0
            y, val_y, g_y = x_new, phi_new, g_new
        else:
            y = x_new + (momentum_k / (momentum_k + 3.0)) * (x_new - x)
            momentum_k += 1
            val_y, g_y = value_and_grad(y)
            if not math.isfinite(val_y):
                raise FloatingPointError("non-finite value encountered in subproblem solve")
        x, val_x = x_new, phi_new

    return ApgResult(x=x, iterations=max_iter, residual=residual, converged=False,
                     lipschitz=lipschitz, trace=trace)


def default_tolerance(spec: SubproblemSpec) -> float:
    """Sigma-scaled stopping threshold: early, loose subproblems are not
    over-solved; the floor keeps the certificate meaningful."""
    scale = min(1.0, float(np.linalg.norm(spec.model.c0)))
    return max(1e-8, 1e-3 * spec.model.sigma * scale)


def solve_apg(
    spec: SubproblemSpec,
    settings: Optional[ApgSettings] = None,
    x_start: Optional[Array] = None,
    initial_lipschitz: Optional[float] = None,
) -> ApgResult:
    """Minimize the subproblem over its box from ``x_start`` (default: the
    model anchor).  Returns the iterate, inner iteration count and the final
    projected-gradient residual.  ``initial_lipschitz`` overrides the
    settings value (used by the outer loop's carry-over mode)."""
    settings = settings or ApgSettings()
    x0 = spec.model.anchor if x_start is None else np.asarray(x_start, dtype=float)
    tol = settings.tol if settings.tol is not None else default_tolerance(spec)
    return apg_minimize(
        value=lambda z: eval_phi(spec, z),
        grad=lambda z: _phi_and_grad(spec, z)[1],
        project=lambda z: np.clip(z, -spec.domain.radius, spec.domain.radius),
        x0=x0,
        tol=tol,
        max_iter=settings.max_iter,
        eta=settings.eta,
        initial_lipschitz=settings.initial_lipschitz if initial_lipschitz is None
        else initial_lipschitz,
        monotone_restart=settings.monotone_restart,
        keep_trace=settings.keep_trace,
        value_and_grad=lambda z: _phi_and_grad(spec, z),
    )


def _check_finite(val, arr):
    if not (np.isfinite(val) and np.all(np.isfinite(arr))):
        raise FloatingPointError("non-finite value encountered in subproblem solve")
