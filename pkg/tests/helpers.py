"""Shared test utilities: small problem builders and independent oracles.

The oracles here deliberately avoid the library's evaluation paths: the
subproblem objective is re-evaluated from its defining formula with plain
loops, the box-QP reference solutions come from exhaustive active-set
enumeration, and gradients are checked against central finite differences.
"""

from __future__ import annotations

import math

import numpy as np

from pmqsopt.core import BoxDomain, StochasticProblem
from pmqsopt.qmodel import CurvatureMatrix, QuadraticModel


def toy_problem(
    n=2,
    p=1,
    num_samples=3,
    radius=1.0,
    L=None,
    nu_g=10.0,
    kappa_f=10.0,
    kappa_g=10.0,
    seed=0,
):
    """Small smooth scenario problem with random quadratic samples.

    Per-sample objective: 0.5 * x'D_s x - b_s'x (D_s >= 0).  Per-sample
    constraints: c_{i,s}'x + 0.5 * e_{i,s} ||x||^2 with |e| <= L_i, so the
    declared weak-convexity moduli are valid.
    """
    rng = np.random.default_rng(seed)
    if L is None:
        L = np.concatenate(([0.0], np.full(p, 0.5)))
    L = np.asarray(L, dtype=float)
    D = rng.uniform(0.2, 1.0, size=(num_samples, n))
    b = rng.normal(size=(num_samples, n))
    C = rng.normal(size=(p, num_samples, n))
    E = rng.uniform(-1.0, 1.0, size=(p, num_samples)) * L[1:, None]

    def objective_value(x, s):
        return 0.5 * float(D[s] @ (x * x)) - float(b[s] @ x)

    def objective_grad(x, s):
        return D[s] * x - b[s]

    def objective_hess_diag(x, s):
        return D[s].copy()

    def constraint_values(x, s):
        return C[:, s, :] @ x + 0.5 * E[:, s] * float(x @ x)

    def constraint_jacobian(x, s):
        return C[:, s, :] + E[:, s][:, None] * x

    return StochasticProblem(
        dim=n, num_constraints=p, num_samples=num_samples,
        domain=BoxDomain(radius=radius, dim=n),
        objective_value=objective_value, objective_grad=objective_grad,
        constraint_values=constraint_values, constraint_jacobian=constraint_jacobian,
        weak_convexity=L, nu_g=nu_g, kappa_f=kappa_f, kappa_g=kappa_g,
        objective_hess_diag=objective_hess_diag,
        name="toy",
    )


def quadratic_problem(diag, lin, con_rows=None, con_rhs=None, radius=1.0):
    """Deterministic (N = 1) problem: objective 0.5 x'diag(d)x - lin'x with
    optional linear constraints row @ x - rhs <= 0.  Convex, zero curvature
    moduli."""
    diag = np.asarray(diag, dtype=float)
    lin = np.asarray(lin, dtype=float)
    n = diag.shape[0]
    rows = np.zeros((0, n)) if con_rows is None else np.asarray(con_rows, dtype=float)
    rhs = np.zeros(0) if con_rhs is None else np.asarray(con_rhs, dtype=float)
    p = rows.shape[0]
    x_norm_max = radius * math.sqrt(n)
    grad_bound = float(np.max(diag)) * x_norm_max + float(np.linalg.norm(lin))
    if p:
        value_bound = float(np.linalg.norm(rows)) * x_norm_max + float(np.linalg.norm(rhs))
    else:
        value_bound = 1.0

    return StochasticProblem(
        dim=n, num_constraints=p, num_samples=1,
        domain=BoxDomain(radius=radius, dim=n),
        objective_value=lambda x, s: 0.5 * float(diag @ (x * x)) - float(lin @ x),
        objective_grad=lambda x, s: diag * x - lin,
        constraint_values=lambda x, s: rows @ x - rhs,
        constraint_jacobian=lambda x, s: rows.copy(),
        weak_convexity=np.zeros(p + 1),
        nu_g=value_bound, kappa_f=grad_bound,
        kappa_g=float(np.max(np.linalg.norm(rows, axis=1))) if p else 1.0,
        objective_hess_diag=lambda x, s: diag.copy(),
        name="boxqp",
    )


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        step = h * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def phi_direct(model: QuadraticModel, radius, x):
    """Subproblem objective evaluated straight from its defining formula,
    one constraint at a time.  Independent of the library's vectorized
    evaluation path."""
    x = np.asarray(x, dtype=float)
    d = x - model.anchor
    sigma0 = model.sigma0.diag()
    val = model.f0 + float(model.c0 @ d) + 0.5 * float(d @ (sigma0 * d))
    for i in range(model.num_constraints):
        quad = model.q0_values[i] + float(model.con_grads[i] @ d) \
            + 0.5 * model.con_curv[i] * float(d @ d)
        term = max(model.lam[i] + model.sigma * quad, 0.0)
        val += term * term / (2.0 * model.sigma)
    val += 0.5 * model.alpha * float(d @ d)
    return val


def golden_section(f, lo, hi, tol=1e-10, max_iter=200):
    """Derivative-free 1-d minimization of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def grid_bisect_min(f, lo, hi, grid=33, sweep_tol=1e-9, max_sweeps=200):
    """Independent minimizer for smooth strictly convex functions on a box:
    coarse grid scan, then cyclic coordinatewise golden-section refinement
    until the sweep displacement stalls."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    axes = [np.linspace(lo[i], hi[i], grid) for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    values = np.array([f(pt) for pt in points])
    x = points[int(np.argmin(values))].copy()

    for _ in range(max_sweeps):
        x_prev = x.copy()
        for i in range(n):
            def line(t, i=i):
                z = x.copy()
                z[i] = t
                return f(z)
            x[i] = golden_section(line, lo[i], hi[i])
        if float(np.max(np.abs(x - x_prev))) < sweep_tol:
            break
    return x


def random_subproblem(rng, n=2, p=2, radius=1.0, sigma_range=(0.01, 0.1)):
    """Random small subproblem spec in a realistic parameter regime: sigma is
    small against tau so the penalty curvature cannot offset the proximal
    curvature and the objective stays strongly convex on the box."""
    from pmqsopt.subproblem import SubproblemSpec

    anchor = rng.uniform(-radius, radius, size=n)
    L = rng.uniform(0.0, 0.2, size=p)
    lam = rng.uniform(0.0, 1.0, size=p)
    tau = rng.uniform(1.0, 2.0)
    alpha = rng.uniform(0.5, 2.0)
    sigma = rng.uniform(*sigma_range)
    model = QuadraticModel(
        anchor=anchor,
        f0=float(rng.normal()),
        c0=rng.normal(size=n),
        sigma0=CurvatureMatrix.scaled_identity(float(tau + lam @ L), n),
        q0_values=rng.uniform(-0.5, 0.5, size=p),
        con_grads=rng.normal(size=(p, n)),
        con_curv=-L,
        sigma=float(sigma),
        alpha=float(alpha),
        tau=float(tau),
        lam=lam,
    )
    return SubproblemSpec(model, BoxDomain(radius=radius, dim=n))


def active_set_boxqp(diag, lin, rows, rhs, radius):
    """Exhaustive active-set reference for min 0.5 x'diag(d)x - lin'x subject
    to rows @ x <= rhs and |x_i| <= radius.

    Enumerates every combination of box states (interior / upper / lower) and
    active constraint subsets, solves the KKT system, and keeps the feasible
    candidate with correct multiplier signs and least objective.  Returns
    ``(x, mu)`` with the inequality multipliers.
    """
    diag = np.asarray(diag, dtype=float)
    lin = np.asarray(lin, dtype=float)
    rows = np.asarray(rows, dtype=float).reshape(-1, diag.size)
    rhs = np.asarray(rhs, dtype=float).reshape(-1)
    n = diag.size
    k = rows.shape[0]
    P = np.diag(diag)

    def objective(x):
        return 0.5 * float(x @ (diag * x)) - float(lin @ x)

    best = None
    import itertools

    for states in itertools.product((0, 1, -1), repeat=n):
        fixed = {i: s * radius for i, s in enumerate(states) if s != 0}
        free = [i for i, s in enumerate(states) if s == 0]
        for active in itertools.chain.from_iterable(
            itertools.combinations(range(k), r) for r in range(k + 1)
        ):
            na, nf = len(active), len(free)
            if na > nf:
                continue
            x = np.zeros(n)
            for i, v in fixed.items():
                x[i] = v
            A_act = rows[list(active)] if na else np.zeros((0, n))
            # KKT system over (x_free, mu_active)
            size = nf + na
            M = np.zeros((size, size))
            q = np.zeros(size)
            for a, i in enumerate(free):
                M[a, a] = diag[i]
                q[a] = lin[i]
                for c in range(na):
                    M[a, nf + c] = A_act[c, i]
            for c in range(na):
                for a, i in enumerate(free):
                    M[nf + c, a] = A_act[c, i]
                q[nf + c] = rhs[list(active)[c]] - sum(
                    A_act[c, i] * x[i] for i in fixed
                )
            try:
                sol = np.linalg.solve(M, q) if size else np.zeros(0)
            except np.linalg.LinAlgError:
                continue
            for a, i in enumerate(free):
                x[i] = sol[a]
            mu = np.zeros(k)
            for c, idx in enumerate(active):
                mu[idx] = sol[nf + c]
            # primal feasibility
            if np.any(np.abs(x) > radius + 1e-9):
                continue
            if k and np.any(rows @ x - rhs > 1e-9):
                continue
            if np.any(mu < -1e-9):
                continue
            # box multiplier signs from stationarity
            grad = diag * x - lin + (rows.T @ mu if k else 0.0)
            ok = True
            for i, s in enumerate(states):
                if s == 1 and grad[i] > 1e-9:
                    ok = False
                elif s == -1 and grad[i] < -1e-9:
                    ok = False
                elif s == 0 and abs(grad[i]) > 1e-7:
                    ok = False
            if not ok:
                continue
            if best is None or objective(x) < best[2] - 1e-12:
                best = (x.copy(), mu.copy(), objective(x))
    if best is None:
        raise RuntimeError("active-set enumeration found no KKT point")
    return best[0], best[1]
