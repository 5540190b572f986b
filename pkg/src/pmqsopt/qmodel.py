"""Per-iteration quadratic models of the sampled objective and constraints.

At the anchor ``x_t`` the model interpolates the sampled function values and
gradients; the constraint curvatures are fixed at ``-(L_i + margin) * I`` so
each constraint model is a global minorant of the sampled constraint, and the
objective curvature follows the multiplier-weighted rule
``Sigma_0 = -sum_i lam_i * Sigma_i + tau * I``, which keeps the augmented
Lagrangian of the model convex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Array, OracleError, StochasticProblem

HESSIAN_MODES = ("step1", "empirical")


@dataclass(frozen=True)
class CurvatureMatrix:
    """Curvature term with O(n) products: scaled identity or diagonal."""

    kind: str
    dim: int
    scale: float = 0.0
    entries: Optional[Array] = None

    @classmethod
    def scaled_identity(cls, scale: float, dim: int) -> "CurvatureMatrix":
        return cls(kind="scaled_identity", dim=dim, scale=float(scale))

    @classmethod
    def diagonal(cls, entries: Array) -> "CurvatureMatrix":
        entries = np.asarray(entries, dtype=float)
        return cls(kind="diagonal", dim=entries.shape[0], entries=entries)

    def diag(self) -> Array:
        if self.kind == "scaled_identity":
            return np.full(self.dim, self.scale)
        return self.entries

    def matvec(self, v: Array) -> Array:
        if self.kind == "scaled_identity":
            return self.scale * v
        return self.entries * v

    def quad(self, v: Array) -> float:
        """Quadratic form ``v' Sigma v``."""
        if self.kind == "scaled_identity":
            return float(self.scale * (v @ v))
        return float(self.entries @ (v * v))

    def norm(self) -> float:
        """Spectral norm."""
        if self.kind == "scaled_identity":
            return abs(self.scale)
        return float(np.max(np.abs(self.entries))) if self.dim else 0.0


@dataclass
class QuadraticModel:
    """Model data for one outer iteration.

    ``q0_values``, ``con_grads`` hold the sampled constraint values and
    gradient rows averaged over the batch, ``con_curv`` the per-constraint
    scaled-identity curvature scales (all ``<= 0``).  ``sigma``, ``alpha``,
    ``tau`` and the multiplier ``lam`` are carried along so the subproblem
    can be formed from the model alone.
    """

    anchor: Array
    f0: float
    c0: Array
    sigma0: CurvatureMatrix
    q0_values: Array
    con_grads: Array
    con_curv: Array
    sigma: float
    alpha: float
    tau: float
    lam: Array

    @property
    def dim(self) -> int:
        return self.anchor.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.q0_values.shape[0]

    def constraint_curvature(self, i: int) -> CurvatureMatrix:
        """The i-th constraint curvature as a matrix object."""
        return CurvatureMatrix.scaled_identity(float(self.con_curv[i]), self.dim)


def build_model(
    problem: StochasticProblem,
    x_t: Array,
    lam_t: Array,
    batch: Sequence[int],
    tau: float,
    sigma: float,
    alpha: float,
    curvature_margin: float = 0.0,
    hessian_mode: str = "step1",
) -> QuadraticModel:
    """Build the batch-averaged quadratic model anchored at ``x_t``.

    Parameters
    ----------
    batch : sequence of int
        Sample indices; the model fields are their uniform average, treated
        as a single scenario realization.
    tau : float
        Positive proximal curvature added to the objective model.
    curvature_margin : float
        Optional ``delta >= 0`` putting the constraint curvatures strictly
        below ``-L_i`` (``Sigma_i = -(L_i + delta) I``).
    hessian_mode : {"step1", "empirical"}
        ``"step1"`` uses the multiplier-weighted curvature rule.
        ``"empirical"`` replaces it with the batch-averaged diagonal Hessian
        of the objective, clamped entrywise to at least ``tau``; requires the
        problem to provide ``objective_hess_diag``.
    """
    x_t = np.asarray(x_t, dtype=float)
    lam_t = np.asarray(lam_t, dtype=float)
    n, p = problem.dim, problem.num_constraints
    if x_t.shape != (n,):
        raise ValueError(f"anchor must have shape ({n},), got {x_t.shape}")
    if lam_t.shape != (p,):
        raise ValueError(f"multiplier must have shape ({p},), got {lam_t.shape}")
    if np.any(lam_t < 0):
        raise ValueError("multipliers must be nonnegative")
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if curvature_margin < 0:
        raise ValueError("curvature_margin must be nonnegative")
    if hessian_mode not in HESSIAN_MODES:
        raise ValueError(f"hessian_mode must be one of {HESSIAN_MODES}")

    f0 = 0.0
    c0 = np.zeros(n)
    q0 = np.zeros(p)
    con_grads = np.zeros((p, n))
    hess = np.zeros(n) if hessian_mode == "empirical" else None
    if hessian_mode == "empirical" and problem.objective_hess_diag is None:
        raise ValueError(
            "hessian_mode='empirical' requires the problem to provide objective_hess_diag"
        )
    for s in batch:
        s = int(s)
        fv = float(problem.objective_value(x_t, s))
        gv = np.asarray(problem.objective_grad(x_t, s), dtype=float)
        if not (np.isfinite(fv) and np.all(np.isfinite(gv))):
            raise OracleError(f"objective oracle returned non-finite output at sample {s}", sample=s)
        f0 += fv
        c0 += gv
        if p > 0:
            cv = np.asarray(problem.constraint_values(x_t, s), dtype=float)
            jv = np.asarray(problem.constraint_jacobian(x_t, s), dtype=float)
            if not (np.all(np.isfinite(cv)) and np.all(np.isfinite(jv))):
                raise OracleError(
                    f"constraint oracle returned non-finite output at sample {s}", sample=s
                )
            q0 += cv
            con_grads += jv
        if hess is not None:
            hv = np.asarray(problem.objective_hess_diag(x_t, s), dtype=float)
            if not np.all(np.isfinite(hv)):
                raise OracleError(
                    f"Hessian oracle returned non-finite output at sample {s}", sample=s
                )
            hess += hv
    b = float(len(batch))
    f0 /= b
    c0 /= b
    q0 /= b
    con_grads /= b

    con_curv = -(problem.weak_convexity[1:] + curvature_margin)
    if hessian_mode == "empirical":
        sigma0 = CurvatureMatrix.diagonal(np.maximum(hess / b, tau))
    else:
        sigma0 = CurvatureMatrix.scaled_identity(float(tau - lam_t @ con_curv), n)

    return QuadraticModel(
        anchor=x_t,
        f0=f0,
        c0=c0,
        sigma0=sigma0,
        q0_values=q0,
        con_grads=con_grads,
        con_curv=con_curv,
        sigma=float(sigma),
        alpha=float(alpha),
        tau=float(tau),
        lam=lam_t,
    )


def eval_model(model: QuadraticModel, x: Array) -> tuple[float, Array]:
    """Evaluate the objective and constraint models at ``x``.

    Returns ``(q0, q)`` with ``q0 = f0 + c0'd + d'Sigma_0 d / 2`` and
    ``q_i = q_i(x_t) + c_i'd + d'Sigma_i d / 2`` for ``d = x - x_t``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != model.anchor.shape:
        raise ValueError(f"expected shape {model.anchor.shape}, got {x.shape}")
    d = x - model.anchor
    q0_val = model.f0 + float(model.c0 @ d) + 0.5 * model.sigma0.quad(d)
    if model.num_constraints == 0:
        return q0_val, np.zeros(0)
    q_vals = model.q0_values + model.con_grads @ d + 0.5 * model.con_curv * float(d @ d)
    return q0_val, q_vals


def aug_lagrangian(model: QuadraticModel, x: Array) -> float:
    """Sampled augmented Lagrangian of the model at ``x`` with its own
    multipliers: ``q0(x) + (sum_i [lam_i + sigma q_i(x)]_+^2 - ||lam||^2) / (2 sigma)``.
    """
    q0_val, q_vals = eval_model(model, x)
    if model.num_constraints == 0:
        return q0_val
    shifted = np.maximum(model.lam + model.sigma * q_vals, 0.0)
    return q0_val + (float(shifted @ shifted) - float(model.lam @ model.lam)) / (2.0 * model.sigma)
