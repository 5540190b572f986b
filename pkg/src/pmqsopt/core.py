"""Problem abstraction, box geometry, algorithm constants, shared numerics.

The solver sees every problem through :class:`StochasticProblem`: a finite
pool of ``num_samples`` scenarios with per-sample value/gradient oracles for
the objective and the constraint vector.  Full expectations are exact uniform
averages over the pool, so all convergence metrics are computable without
sampling error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


class OracleError(RuntimeError):
    """A stochastic oracle returned a non-finite value.

    Carries the offending sample index in ``sample`` when known.
    """

    def __init__(self, message: str, sample: int | None = None):
        super().__init__(message)
        self.sample = sample


@dataclass(frozen=True)
class BoxDomain:
    """The feasible box ``{x : |x_i| <= radius}`` in ``dim`` variables."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"box radius must be positive, got {self.radius}")
        if self.dim < 1:
            raise ValueError(f"box dimension must be >= 1, got {self.dim}")

    @property
    def diameter(self) -> float:
        """Upper bound on ``||x - z||`` over the box: ``2 * radius * sqrt(dim)``."""
        return 2.0 * self.radius * math.sqrt(self.dim)

    def project(self, x: Array) -> Array:
        return project_box(x, self)

    def contains(self, x: Array, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(x)) <= self.radius + tol)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> Array:
        """Uniform draw(s) from the box; shape ``(dim,)`` or ``(size, dim)``."""
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(-self.radius, self.radius, size=shape)


def project_box(x: Array, domain: BoxDomain) -> Array:
    """Euclidean projection onto the box: componentwise clamp to ``[-R, R]``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (domain.dim,):
        raise ValueError(f"expected vector of length {domain.dim}, got shape {x.shape}")
    return np.clip(x, -domain.radius, domain.radius)


def positive_part(v: Array) -> Array:
    """Projection onto the nonnegative orthant, ``max(v, 0)`` elementwise."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)


@dataclass
class StochasticProblem:
    """Finite-sample scenario model of a constrained stochastic program.

    ``objective_value(x, s)`` and ``objective_grad(x, s)`` evaluate the
    per-sample objective and its gradient at sample index ``s``;
    ``constraint_values(x, s)`` returns the length-``num_constraints`` vector
    of per-sample constraint values and ``constraint_jacobian(x, s)`` its
    ``(p, n)`` Jacobian.  Full expectations are uniform averages over
    ``range(num_samples)``; generators may install closed-form full oracles
    (``mean_*``) to avoid the sample loop.

    ``weak_convexity`` holds the moduli ``(L_0, L_1, ..., L_p)``: adding
    ``L_j/2 * ||x||^2`` to the j-th per-sample function makes it convex.
    ``nu_g`` bounds ``||G(x, s)||``, ``kappa_f`` bounds the objective
    gradient norm and ``kappa_g`` every constraint gradient norm, all over
    the box.  ``slater_point``/``slater_margin`` record a strictly feasible
    point when one is known; they are used only for diagnostics.
    ``reference_point`` is an instance-specific anchor (for the synthetic
    quadratically constrained family, the common active boundary point)
    available as a start point for runs.
    """

    dim: int
    num_constraints: int
    num_samples: int
    domain: BoxDomain
    objective_value: Callable[[Array, int], float]
    objective_grad: Callable[[Array, int], Array]
    constraint_values: Callable[[Array, int], Array]
    constraint_jacobian: Callable[[Array, int], Array]
    weak_convexity: Array
    nu_g: Optional[float] = None
    kappa_f: Optional[float] = None
    kappa_g: Optional[float] = None
    slater_point: Optional[Array] = None
    slater_margin: Optional[float] = None
    reference_point: Optional[Array] = None
    objective_hess_diag: Optional[Callable[[Array, int], Array]] = None
    mean_objective: Optional[Callable[[Array], float]] = None
    mean_objective_grad: Optional[Callable[[Array], Array]] = None
    mean_constraints: Optional[Callable[[Array], Array]] = None
    mean_constraint_jacobian: Optional[Callable[[Array], Array]] = None
    name: str = "problem"

    def __post_init__(self):
        self.weak_convexity = np.asarray(self.weak_convexity, dtype=float)
        if self.weak_convexity.shape != (self.num_constraints + 1,):
            raise ValueError(
                "weak_convexity must have one modulus per function "
                f"(expected {self.num_constraints + 1}, got {self.weak_convexity.shape})"
            )
        if np.any(self.weak_convexity < 0):
            raise ValueError("weak-convexity moduli must be nonnegative")
        if self.domain.dim != self.dim:
            raise ValueError("domain dimension does not match problem dimension")

    # -- full (exact finite-sum) oracles -----------------------------------

    def objective_mean(self, x: Array) -> float:
        if self.mean_objective is not None:
            return float(self.mean_objective(x))
        return float(
            np.mean([self.objective_value(x, s) for s in range(self.num_samples)])
        )

    def objective_grad_mean(self, x: Array) -> Array:
        if self.mean_objective_grad is not None:
            return np.asarray(self.mean_objective_grad(x), dtype=float)
        acc = np.zeros(self.dim)
        for s in range(self.num_samples):
            acc += self.objective_grad(x, s)
        return acc / self.num_samples

    def constraint_mean(self, x: Array) -> Array:
        if self.num_constraints == 0:
            return np.zeros(0)
        if self.mean_constraints is not None:
            return np.asarray(self.mean_constraints(x), dtype=float)
        acc = np.zeros(self.num_constraints)
        for s in range(self.num_samples):
            acc += self.constraint_values(x, s)
        return acc / self.num_samples

    def constraint_jac_mean(self, x: Array) -> Array:
        if self.num_constraints == 0:
            return np.zeros((0, self.dim))
        if self.mean_constraint_jacobian is not None:
            return np.asarray(self.mean_constraint_jacobian(x), dtype=float)
        acc = np.zeros((self.num_constraints, self.dim))
        for s in range(self.num_samples):
            acc += self.constraint_jacobian(x, s)
        return acc / self.num_samples

    def lagrangian_modulus(self, lam: Array) -> float:
        """Weak-convexity modulus of ``x -> f(x) + lam @ g(x)``."""
        L = self.weak_convexity
        if self.num_constraints == 0:
            return float(L[0])
        return float(L[0] + np.asarray(lam, dtype=float) @ L[1:])


@dataclass(frozen=True)
class AlgoConstants:
    """Instance constants entering the dual-increment bounds and step sizes.

    ``gamma2 * sigma`` bounds every single-coordinate multiplier increment
    and ``gamma1 * sigma`` the multiplier norm drift per iteration;
    ``kappa_sigma`` is the largest constraint curvature modulus and ``beta``
    the step-size coefficient ``2 * (L_0 + gamma2 * sum_j L_j) + 1``.
    """

    gamma1: float
    gamma2: float
    kappa_sigma: float
    beta: float


def compute_constants(problem: StochasticProblem) -> AlgoConstants:
    """Evaluate the four algorithm constants from the problem's bounds.

    Raises ``ValueError`` when ``nu_g``/``kappa_f``/``kappa_g`` are missing;
    callers must supply them on the problem or estimate them first (see
    :func:`estimate_bounds`).
    """
    missing = [
        name
        for name, value in (
            ("nu_g", problem.nu_g),
            ("kappa_f", problem.kappa_f),
            ("kappa_g", problem.kappa_g),
        )
        if value is None
    ]
    if missing:
        raise ValueError(
            f"problem is missing bounds {missing}; supply them on the instance "
            "or estimate them with estimate_bounds()"
        )
    p = problem.num_constraints
    d0 = problem.domain.diameter
    L = problem.weak_convexity
    kappa_sigma = float(np.max(L[1:])) if p > 0 else 0.0
    curve = problem.kappa_g * d0 + 0.5 * kappa_sigma * d0**2
    gamma1 = problem.nu_g + math.sqrt(p) * curve
    gamma2 = problem.nu_g + curve
    beta = 2.0 * (L[0] + gamma2 * float(np.sum(L[1:]))) + 1.0
    return AlgoConstants(gamma1=gamma1, gamma2=gamma2, kappa_sigma=kappa_sigma, beta=beta)


def probe_bounds(
    problem: StochasticProblem, rng: np.random.Generator, num_probes: int = 1000
) -> tuple[float, float, float]:
    """Observed maxima of ``||G||``, ``||grad F||`` and ``max_i ||grad G_i||``
    over random in-box points and samples.  Used to validate declared bounds
    and, inflated, to estimate missing ones.
    """
    max_g = 0.0
    max_of = 0.0
    max_cg = 0.0
    for _ in range(num_probes):
        x = problem.domain.sample(rng)
        s = int(rng.integers(problem.num_samples))
        max_of = max(max_of, float(np.linalg.norm(problem.objective_grad(x, s))))
        if problem.num_constraints > 0:
            g = problem.constraint_values(x, s)
            max_g = max(max_g, float(np.linalg.norm(g)))
            jac = problem.constraint_jacobian(x, s)
            max_cg = max(max_cg, float(np.max(np.linalg.norm(jac, axis=1))))
    return max_g, max_of, max_cg


def estimate_bounds(
    problem: StochasticProblem,
    rng: np.random.Generator,
    num_probes: int = 10_000,
    inflation: float = 1.1,
) -> tuple[float, float, float]:
    """Probe-based ``(nu_g, kappa_f, kappa_g)`` estimates, inflated by 10%.

    Fallback for instances without analytic bounds; the returned values are
    empirical maxima and carry no guarantee.
    """
    max_g, max_of, max_cg = probe_bounds(problem, rng, num_probes)
    return inflation * max_g, inflation * max_of, inflation * max_cg
