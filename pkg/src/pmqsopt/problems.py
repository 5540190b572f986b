"""Seeded generators for the three benchmark families.

* ``qcnp``: synthetic quadratically constrained nonconvex problem with a
  log-quadratic objective and diagonal-quadratic constraints sharing a
  common active boundary point.
* ``np``: nonconvex Neyman-Pearson classification on synthetic two-class
  Gaussian data with a sigmoid-loss false-positive constraint.
* ``fairness``: classification with a truncated logistic loss and a
  group-rate fairness constraint, on synthetic grouped data.

Every generator is a deterministic function of ``(seed, parameters)`` and
returns a :class:`~pmqsopt.core.StochasticProblem` with analytic gradient
and curvature bounds attached.  Instances serialize to a versioned JSON
document for reuse across runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .core import Array, BoxDomain, StochasticProblem
from .rng import named_stream

SCHEMA_VERSION = 1

#: Sigmoid curvature bound: max |phi''| for phi(u) = 1 / (1 + exp(u)).
SIGMOID_CURVATURE = 1.0 / (6.0 * math.sqrt(3.0))

#: False-positive levels used by the packaged Neyman-Pearson presets.
NP_FALSE_POSITIVE_LEVELS = (0.2, 0.3, 0.2)

#: Violation levels used by the packaged fairness presets.
FAIRNESS_VIOLATION_LEVELS = (0.1, 0.62, 0.55)

#: Default truncation parameter of the logistic-loss transformation.
TRUNCATION_ALPHA = 2.0


def _sigmoid(u):
    # numerically stable 1 / (1 + exp(-u))
    u = np.asarray(u, dtype=float)
    e = np.exp(-np.abs(u))
    return np.where(u >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _sigmoid_loss(u):
    """phi(u) = 1 / (1 + exp(u)); decreasing sigmoid loss."""
    return _sigmoid(-np.asarray(u, dtype=float))


# =====================================================================
# QCNP
# =====================================================================

@dataclass
class QcnpInstance:
    """Arrays defining one synthetic QCNP draw.

    Constraints are centered at the boundary reference ``xbar`` (so
    ``g_i(xbar) = 0`` exactly) and ``x_feas = xbar - 0.5`` is strictly
    feasible; the objective vanishes at ``x_obj`` by construction of the
    targets.
    """

    seed: int
    radius: float
    q_max: float
    maps: Array        # (N, m, n) objective maps, entries N(0, 1/n)
    targets: Array     # (N, m), targets = maps @ x_obj
    lin_coeffs: Array  # (p, N, n) constraint linear terms
    quad_diags: Array  # (p, N, n) constraint diagonal quadratic terms
    xbar: Array
    x_feas: Array
    x_obj: Array

    @property
    def dims(self) -> tuple[int, int, int, int]:
        p, num_samples, n = self.lin_coeffs.shape
        return n, p, num_samples, self.maps.shape[1]


def qcnp_instance(
    seed: int,
    n: int = 50,
    p: int = 50,
    num_samples: int = 100,
    m: int = 5,
    radius: float = 10.0,
    q_max: float = 0.05,
    a_range: tuple[float, float] = (0.5, 0.7),
    xbar_range: tuple[float, float] = (-1.5, -0.5),
) -> QcnpInstance:
    """Draw a QCNP instance.  Draw order is fixed: boundary reference, then
    objective maps, then constraint linear terms, then quadratic diagonals."""
    rng = named_stream(seed, "instance")
    xbar = rng.uniform(xbar_range[0], xbar_range[1], size=n)
    maps = rng.normal(0.0, 1.0 / math.sqrt(n), size=(num_samples, m, n))
    lin_coeffs = rng.uniform(a_range[0], a_range[1], size=(p, num_samples, n))
    quad_diags = rng.uniform(-q_max, q_max, size=(p, num_samples, n))
    x_obj = np.ones(n)
    targets = maps @ x_obj
    return QcnpInstance(
        seed=int(seed), radius=float(radius), q_max=float(q_max),
        maps=maps, targets=targets, lin_coeffs=lin_coeffs, quad_diags=quad_diags,
        xbar=xbar, x_feas=xbar - 0.5, x_obj=x_obj,
    )


def qcnp_problem(inst: QcnpInstance) -> StochasticProblem:
    """Wrap a QCNP instance as a scenario problem with analytic bounds."""
    n, p, num_samples, _ = inst.dims
    domain = BoxDomain(radius=inst.radius, dim=n)
    maps, targets = inst.maps, inst.targets
    A, Q, xbar = inst.lin_coeffs, inst.quad_diags, inst.xbar
    a_mean = A.mean(axis=1)
    q_mean = Q.mean(axis=1)

    def objective_value(x, s):
        r = maps[s] @ x - targets[s]
        return math.log1p(0.5 * float(r @ r))

    def objective_grad(x, s):
        r = maps[s] @ x - targets[s]
        return maps[s].T @ r / (1.0 + 0.5 * float(r @ r))

    def objective_hess_diag(x, s):
        H = maps[s]
        r = H @ x - targets[s]
        w = 1.0 + 0.5 * float(r @ r)
        hr = H.T @ r
        return np.einsum("ij,ij->j", H, H) / w - hr * hr / w**2

    def constraint_values(x, s):
        d = x - xbar
        return A[:, s, :] @ d + 0.5 * (Q[:, s, :] @ (d * d))

    def constraint_jacobian(x, s):
        d = x - xbar
        return A[:, s, :] + Q[:, s, :] * d

    def mean_objective(x):
        r = maps @ x - targets
        return float(np.mean(np.log1p(0.5 * np.einsum("sm,sm->s", r, r))))

    def mean_objective_grad(x):
        r = maps @ x - targets
        w = 1.0 + 0.5 * np.einsum("sm,sm->s", r, r)
        return np.einsum("smn,sm->n", maps, r / w[:, None]) / num_samples

    def mean_constraints(x):
        d = x - xbar
        return a_mean @ d + 0.5 * (q_mean @ (d * d))

    def mean_constraint_jacobian(x):
        return a_mean + q_mean * (x - xbar)

    # analytic bounds over the box; r_max bounds ||x - xbar||
    r_max = math.sqrt(float(np.sum((inst.radius + np.abs(xbar)) ** 2)))
    a_norms = np.linalg.norm(A, axis=2)          # (p, N)
    q_abs = np.max(np.abs(Q), axis=2)            # (p, N)
    per_con = a_norms * r_max + 0.5 * q_abs * r_max**2
    nu_g = float(np.max(np.linalg.norm(per_con, axis=0)))
    kappa_g = float(np.max(a_norms + q_abs * r_max))
    spectral = np.linalg.norm(maps, ord=2, axis=(1, 2))
    kappa_f = float(np.max(spectral)) / math.sqrt(2.0)
    # log(1 + ||.||^2 / 2) of a linear map: Hessian = H'H/w - (H'r)(H'r)'/w^2,
    # so the negative curvature is at most ||H||^2 * (||r||^2 / w^2) <= ||H||^2 / 2
    L0 = float(np.max(spectral) ** 2) / 2.0
    weak_convexity = np.concatenate(([L0], np.full(p, inst.q_max)))

    g_feas = mean_constraints(inst.x_feas)
    margin = float(-np.max(g_feas))

    return StochasticProblem(
        dim=n, num_constraints=p, num_samples=num_samples, domain=domain,
        objective_value=objective_value, objective_grad=objective_grad,
        constraint_values=constraint_values, constraint_jacobian=constraint_jacobian,
        weak_convexity=weak_convexity,
        nu_g=nu_g, kappa_f=kappa_f, kappa_g=kappa_g,
        slater_point=inst.x_feas.copy(), slater_margin=margin if margin > 0 else None,
        reference_point=inst.xbar.copy(),
        objective_hess_diag=objective_hess_diag,
        mean_objective=mean_objective, mean_objective_grad=mean_objective_grad,
        mean_constraints=mean_constraints, mean_constraint_jacobian=mean_constraint_jacobian,
        name=f"qcnp(seed={inst.seed})",
    )


def qcnp_generate(seed: int, **kwargs) -> StochasticProblem:
    """Generate a QCNP scenario problem (see :func:`qcnp_instance` for
    parameters and defaults)."""
    return qcnp_problem(qcnp_instance(seed, **kwargs))


# =====================================================================
# Neyman-Pearson classification
# =====================================================================

@dataclass
class NpInstance:
    """Two-class data for the Neyman-Pearson model: minimize the sigmoid
    false-negative loss on the positive class subject to a bound
    ``tau_np`` on the sigmoid false-positive estimate on the negative
    class.  Feature rows are unit norm."""

    seed: int
    tau_np: float
    radius: float
    pos: Array  # (n0, d)
    neg: Array  # (n1, d)


def np_instance(
    seed: int,
    d: int = 30,
    n0: int = 200,
    n1: int = 200,
    tau_np: float = NP_FALSE_POSITIVE_LEVELS[0],
    separation: float = 2.0,
    radius: float = 100.0,
) -> NpInstance:
    if not 0.0 < tau_np < 1.0:
        raise ValueError(f"tau_np must lie in (0, 1), got {tau_np}")
    if min(n0, n1) < 1:
        raise ValueError("both classes need at least one sample")
    rng = named_stream(seed, "instance")
    mu = separation / (2.0 * math.sqrt(d)) * np.ones(d)
    pos = rng.normal(0.0, 1.0, size=(n0, d)) + mu
    neg = rng.normal(0.0, 1.0, size=(n1, d)) - mu
    pos /= np.linalg.norm(pos, axis=1, keepdims=True)
    neg /= np.linalg.norm(neg, axis=1, keepdims=True)
    return NpInstance(seed=int(seed), tau_np=float(tau_np), radius=float(radius),
                      pos=pos, neg=neg)


def np_problem(inst: NpInstance) -> StochasticProblem:
    pos, neg, tau = inst.pos, inst.neg, inst.tau_np
    n0, d = pos.shape
    n1 = neg.shape[0]
    num_samples = math.lcm(n0, n1)
    if num_samples > 1_000_000:
        raise ValueError(
            f"class sizes {n0} and {n1} have lcm {num_samples}; pick sizes with a "
            "small common multiple so the scenario average stays exact"
        )
    domain = BoxDomain(radius=inst.radius, dim=d)

    def objective_value(x, s):
        return float(_sigmoid_loss(x @ pos[s % n0]))

    def objective_grad(x, s):
        a = pos[s % n0]
        v = _sigmoid_loss(x @ a)
        return float(-v * (1.0 - v)) * a

    def objective_hess_diag(x, s):
        a = pos[s % n0]
        v = float(_sigmoid_loss(x @ a))
        return v * (1.0 - v) * (1.0 - 2.0 * v) * a * a

    def constraint_values(x, s):
        return np.array([float(_sigmoid_loss(-x @ neg[s % n1])) - tau])

    def constraint_jacobian(x, s):
        a = neg[s % n1]
        v = float(_sigmoid_loss(-x @ a))
        return (v * (1.0 - v) * a)[None, :]

    def mean_objective(x):
        return float(np.mean(_sigmoid_loss(pos @ x)))

    def mean_objective_grad(x):
        v = _sigmoid_loss(pos @ x)
        return pos.T @ (-v * (1.0 - v)) / n0

    def mean_constraints(x):
        return np.array([float(np.mean(_sigmoid_loss(-neg @ x))) - tau])

    def mean_constraint_jacobian(x):
        v = _sigmoid_loss(-neg @ x)
        return (neg.T @ (v * (1.0 - v)) / n1)[None, :]

    weak_convexity = np.array([SIGMOID_CURVATURE, SIGMOID_CURVATURE])
    slater_point, slater_margin = _line_search_slater(
        mean_constraints, -np.mean(neg, axis=0), domain
    )

    return StochasticProblem(
        dim=d, num_constraints=1, num_samples=num_samples, domain=domain,
        objective_value=objective_value, objective_grad=objective_grad,
        constraint_values=constraint_values, constraint_jacobian=constraint_jacobian,
        weak_convexity=weak_convexity,
        nu_g=max(tau, 1.0 - tau), kappa_f=0.25, kappa_g=0.25,
        slater_point=slater_point, slater_margin=slater_margin,
        objective_hess_diag=objective_hess_diag,
        mean_objective=mean_objective, mean_objective_grad=mean_objective_grad,
        mean_constraints=mean_constraints, mean_constraint_jacobian=mean_constraint_jacobian,
        name=f"np(seed={inst.seed})",
    )


def np_generate(seed: int, **kwargs) -> StochasticProblem:
    """Generate a Neyman-Pearson scenario problem (see :func:`np_instance`)."""
    return np_problem(np_instance(seed, **kwargs))


# =====================================================================
# Fairness-constrained classification
# =====================================================================

@dataclass
class FairnessInstance:
    """Grouped data for the fairness model.

    The protected group is the first ``group_size`` rows and the minority
    subgroup its first ``minority_size`` rows; both sizes divide the total
    so the scenario average over one index reproduces the group means
    exactly.  ``scale = tau_f * group_size / minority_size`` weights the
    group rate in the constraint."""

    seed: int
    tau_f: float
    alpha_tr: float
    radius: float
    features: Array  # (N, d), unit-norm rows
    labels: Array    # (N,), in {-1, +1}
    group_size: int
    minority_size: int

    @property
    def scale(self) -> float:
        return self.tau_f * self.group_size / self.minority_size


def fairness_instance(
    seed: int,
    d: int = 20,
    sizes: tuple[int, int, int] = (600, 300, 100),
    tau_f: float = FAIRNESS_VIOLATION_LEVELS[0],
    alpha_tr: float = TRUNCATION_ALPHA,
    radius: float = 100.0,
) -> FairnessInstance:
    total, group, minority = sizes
    if not (1 <= minority <= group <= total):
        raise ValueError(f"sizes must satisfy minority <= group <= total, got {sizes}")
    if total % group or total % minority:
        raise ValueError(
            f"group sizes {group}, {minority} must divide the total {total} so the "
            "scenario average over one sample index is exact"
        )
    if not tau_f > 0:
        raise ValueError(f"tau_f must be positive, got {tau_f}")
    rng = named_stream(seed, "instance")
    features = rng.normal(0.0, 1.0, size=(total, d))
    features[:group] += 0.5 / math.sqrt(d)
    features[:minority] -= 1.5 / math.sqrt(d)
    features /= np.linalg.norm(features, axis=1, keepdims=True)
    truth = rng.normal(0.0, 1.0, size=d) / math.sqrt(d)
    labels = np.sign(features @ truth + 0.3 * rng.normal(size=total))
    labels[labels == 0] = 1.0
    return FairnessInstance(
        seed=int(seed), tau_f=float(tau_f), alpha_tr=float(alpha_tr),
        radius=float(radius), features=features, labels=labels,
        group_size=int(group), minority_size=int(minority),
    )


def fairness_problem(inst: FairnessInstance) -> StochasticProblem:
    a, b = inst.features, inst.labels
    total, d = a.shape
    group, minority = inst.group_size, inst.minority_size
    c = inst.scale
    alpha_tr = inst.alpha_tr
    domain = BoxDomain(radius=inst.radius, dim=d)
    grp = a[:group]
    mino = a[:minority]

    def _loss_parts(z):
        # z = b * a'x; returns (truncated loss value, d loss / dz)
        ell = np.logaddexp(0.0, -z)
        val = alpha_tr * np.log1p(ell / alpha_tr)
        dval = -_sigmoid(-z) / (1.0 + ell / alpha_tr)
        return val, dval

    def objective_value(x, s):
        val, _ = _loss_parts(b[s] * float(a[s] @ x))
        return float(val)

    def objective_grad(x, s):
        _, dv = _loss_parts(b[s] * float(a[s] @ x))
        return float(dv) * b[s] * a[s]

    def objective_hess_diag(x, s):
        z = b[s] * float(a[s] @ x)
        ell = float(np.logaddexp(0.0, -z))
        phi_p = 1.0 / (1.0 + ell / alpha_tr)
        phi_pp = -(1.0 / alpha_tr) * phi_p**2
        s_neg = float(_sigmoid(-z))
        dz = -s_neg                       # d ell / dz
        d2z = s_neg * (1.0 - s_neg)       # d2 ell / dz2
        # chain rule on z = b a'x with b^2 = 1
        return (phi_pp * dz * dz + phi_p * d2z) * a[s] * a[s]

    def constraint_values(x, s):
        u1 = float(grp[s % group] @ x)
        u2 = float(mino[s % minority] @ x)
        return np.array([c * float(_sigmoid(u1)) - float(_sigmoid(u2))])

    def constraint_jacobian(x, s):
        a1, a2 = grp[s % group], mino[s % minority]
        s1, s2 = float(_sigmoid(a1 @ x)), float(_sigmoid(a2 @ x))
        return (c * s1 * (1.0 - s1) * a1 - s2 * (1.0 - s2) * a2)[None, :]

    def mean_objective(x):
        val, _ = _loss_parts(b * (a @ x))
        return float(np.mean(val))

    def mean_objective_grad(x):
        _, dv = _loss_parts(b * (a @ x))
        return a.T @ (dv * b) / total

    def mean_constraints(x):
        return np.array([
            c * float(np.mean(_sigmoid(grp @ x))) - float(np.mean(_sigmoid(mino @ x)))
        ])

    def mean_constraint_jacobian(x):
        s1 = _sigmoid(grp @ x)
        s2 = _sigmoid(mino @ x)
        row = c * grp.T @ (s1 * (1.0 - s1)) / group - mino.T @ (s2 * (1.0 - s2)) / minority
        return row[None, :]

    weak_convexity = np.array([1.0 / alpha_tr, (c + 1.0) * SIGMOID_CURVATURE])
    if c < 1.0:
        slater_point = np.zeros(d)
        slater_margin = (1.0 - c) / 2.0
    else:
        direction = np.mean(mino, axis=0) - np.mean(grp, axis=0)
        slater_point, slater_margin = _line_search_slater(mean_constraints, direction, domain)

    return StochasticProblem(
        dim=d, num_constraints=1, num_samples=total, domain=domain,
        objective_value=objective_value, objective_grad=objective_grad,
        constraint_values=constraint_values, constraint_jacobian=constraint_jacobian,
        weak_convexity=weak_convexity,
        nu_g=max(c, 1.0), kappa_f=1.0, kappa_g=(c + 1.0) / 4.0,
        slater_point=slater_point, slater_margin=slater_margin,
        objective_hess_diag=objective_hess_diag,
        mean_objective=mean_objective, mean_objective_grad=mean_objective_grad,
        mean_constraints=mean_constraints, mean_constraint_jacobian=mean_constraint_jacobian,
        name=f"fairness(seed={inst.seed})",
    )


def fairness_generate(seed: int, **kwargs) -> StochasticProblem:
    """Generate a fairness scenario problem (see :func:`fairness_instance`)."""
    return fairness_problem(fairness_instance(seed, **kwargs))


def _line_search_slater(mean_constraints, direction, domain, num_points=200):
    """Deterministic search for a strictly feasible point along a ray from
    the origin; returns ``(None, None)`` when the ray stays infeasible."""
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return None, None
    v = direction / norm
    t_max = domain.radius / float(np.max(np.abs(v)))
    best_point, best_val = None, 0.0
    for t in np.linspace(0.0, t_max, num_points + 1):
        val = float(np.max(mean_constraints(t * v)))
        if val < best_val:
            best_point, best_val = t * v, val
    if best_point is None or best_val >= -1e-9:
        return None, None
    return best_point, -best_val


# =====================================================================
# Serialization
# =====================================================================

_FAMILIES = {
    "qcnp": (QcnpInstance, qcnp_problem),
    "np": (NpInstance, np_problem),
    "fairness": (FairnessInstance, fairness_problem),
}

GENERATORS = {
    "qcnp": qcnp_generate,
    "np": np_generate,
    "fairness": fairness_generate,
}

INSTANCE_MAKERS = {
    "qcnp": qcnp_instance,
    "np": np_instance,
    "fairness": fairness_instance,
}


def instance_family(inst) -> str:
    for family, (cls, _) in _FAMILIES.items():
        if isinstance(inst, cls):
            return family
    raise TypeError(f"unknown instance type {type(inst).__name__}")


def save_instance(inst, path) -> None:
    """Write an instance to a versioned JSON document."""
    family = instance_family(inst)
    data = {}
    for key, value in vars(inst).items():
        data[key] = value.tolist() if isinstance(value, np.ndarray) else value
    doc = {"schema_version": SCHEMA_VERSION, "family": family, "data": data}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")))


def load_instance(path):
    """Read an instance JSON document back into its dataclass."""
    doc = json.loads(Path(path).read_text())
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported instance schema version {version}")
    family = doc["family"]
    if family not in _FAMILIES:
        raise ValueError(f"unknown instance family {family!r}")
    cls, _ = _FAMILIES[family]
    data = dict(doc["data"])
    for key, value in data.items():
        if isinstance(value, list):
            data[key] = np.asarray(value, dtype=float)
    return cls(**data)


def problem_from_instance(inst) -> StochasticProblem:
    """Build the scenario problem for a loaded or generated instance."""
    _, builder = _FAMILIES[instance_family(inst)]
    return builder(inst)
