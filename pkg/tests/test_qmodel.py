import numpy as np
import pytest
from numpy.testing import assert_allclose

from pmqsopt.core import BoxDomain, OracleError, StochasticProblem
from pmqsopt.qmodel import (
    CurvatureMatrix,
    QuadraticModel,
    aug_lagrangian,
    build_model,
    eval_model,
)
from pmqsopt.problems import qcnp_generate

from helpers import toy_problem


class TestCurvatureMatrix:
    def test_scaled_identity(self):
        mat = CurvatureMatrix.scaled_identity(-2.0, 3)
        v = np.array([1.0, -1.0, 2.0])
        assert_allclose(mat.diag(), [-2.0, -2.0, -2.0])
        assert_allclose(mat.matvec(v), -2.0 * v)
        assert_allclose(mat.quad(v), -2.0 * 6.0)
        assert mat.norm() == 2.0

    def test_diagonal(self):
        mat = CurvatureMatrix.diagonal(np.array([1.0, -3.0]))
        v = np.array([2.0, 1.0])
        assert_allclose(mat.matvec(v), [2.0, -3.0])
        assert_allclose(mat.quad(v), 4.0 - 3.0)
        assert mat.norm() == 3.0


class TestBuildModel:
    def test_interpolates_at_anchor(self):
        prob = toy_problem(n=3, p=2, num_samples=5, seed=4)
        x_t = np.array([0.2, -0.1, 0.4])
        lam = np.array([0.5, 0.0])
        batch = [1, 3]
        model = build_model(prob, x_t, lam, batch, tau=2.0, sigma=0.5, alpha=1.0)
        q0, q = eval_model(model, x_t)
        f_avg = np.mean([prob.objective_value(x_t, s) for s in batch])
        g_avg = np.mean([prob.constraint_values(x_t, s) for s in batch], axis=0)
        assert_allclose(q0, f_avg)
        assert_allclose(q, g_avg)

    def test_zero_multiplier_gives_tau_identity(self):
        prob = toy_problem(n=2, p=2, num_samples=3, seed=5)
        model = build_model(prob, np.zeros(2), np.zeros(2), [0], tau=3.5, sigma=1.0, alpha=1.0)
        assert model.sigma0.kind == "scaled_identity"
        assert model.sigma0.scale == 3.5

    def test_one_dimensional_minorant_equality(self):
        # per-sample constraint G(x) = -x^2 has weak-convexity modulus 2; the
        # model with curvature -2 reproduces it exactly
        prob = StochasticProblem(
            dim=1, num_constraints=1, num_samples=1,
            domain=BoxDomain(radius=5.0, dim=1),
            objective_value=lambda x, s: 0.0,
            objective_grad=lambda x, s: np.zeros(1),
            constraint_values=lambda x, s: np.array([-float(x[0]) ** 2]),
            constraint_jacobian=lambda x, s: np.array([[-2.0 * float(x[0])]]),
            weak_convexity=np.array([0.0, 2.0]),
            nu_g=25.0, kappa_f=1.0, kappa_g=10.0,
        )
        x_t = np.array([0.7])
        model = build_model(prob, x_t, np.zeros(1), [0], tau=1.0, sigma=1.0, alpha=1.0)
        for x in np.linspace(-5, 5, 21):
            _, q = eval_model(model, np.array([x]))
            assert_allclose(q[0], -x**2, atol=1e-12)

    def test_validation_errors(self):
        prob = toy_problem()
        with pytest.raises(ValueError, match="nonneg"):
            build_model(prob, np.zeros(2), np.array([-0.1]), [0], tau=1.0, sigma=1.0, alpha=1.0)
        with pytest.raises(ValueError, match="nonempty"):
            build_model(prob, np.zeros(2), np.zeros(1), [], tau=1.0, sigma=1.0, alpha=1.0)
        with pytest.raises(ValueError, match="tau"):
            build_model(prob, np.zeros(2), np.zeros(1), [0], tau=0.0, sigma=1.0, alpha=1.0)

    def test_nan_oracle_error_names_sample(self):
        prob = toy_problem(n=2, p=1, num_samples=4, seed=6)
        inner = prob.objective_value
        prob.objective_value = lambda x, s: np.nan if s == 2 else inner(x, s)
        with pytest.raises(OracleError) as err:
            build_model(prob, np.zeros(2), np.zeros(1), [0, 2], tau=1.0, sigma=1.0, alpha=1.0)
        assert err.value.sample == 2

    def test_empirical_hessian_mode_clamps_to_tau(self):
        prob = toy_problem(n=3, p=1, num_samples=3, seed=7)
        model = build_model(prob, np.zeros(3), np.zeros(1), [0, 1], tau=0.9,
                            sigma=1.0, alpha=1.0, hessian_mode="empirical")
        assert model.sigma0.kind == "diagonal"
        assert np.all(model.sigma0.diag() >= 0.9)

    def test_empirical_mode_requires_hessian_oracle(self):
        prob = toy_problem()
        prob.objective_hess_diag = None
        with pytest.raises(ValueError, match="objective_hess_diag"):
            build_model(prob, np.zeros(2), np.zeros(1), [0], tau=1.0, sigma=1.0,
                        alpha=1.0, hessian_mode="empirical")

    def test_curvature_margin(self):
        prob = toy_problem(n=2, p=2, num_samples=3, L=[0.0, 0.4, 0.6], seed=8)
        model = build_model(prob, np.zeros(2), np.zeros(2), [0], tau=1.0, sigma=1.0,
                            alpha=1.0, curvature_margin=0.1)
        assert_allclose(model.con_curv, [-0.5, -0.7])


class TestEvalModel:
    def test_anchor_value(self):
        prob = toy_problem(n=2, p=1, num_samples=3, seed=9)
        x_t = np.array([0.1, 0.2])
        model = build_model(prob, x_t, np.zeros(1), [1], tau=1.0, sigma=1.0, alpha=1.0)
        q0, q = eval_model(model, x_t)
        assert_allclose(q0, model.f0)
        assert_allclose(q, model.q0_values)

    def test_hand_arithmetic(self):
        # q0 = f0 + c0 d + 0.5 * Sigma0 d^2 = 0 + 1 + 1 = 2
        model = QuadraticModel(
            anchor=np.zeros(1), f0=0.0, c0=np.array([1.0]),
            sigma0=CurvatureMatrix.scaled_identity(2.0, 1),
            q0_values=np.zeros(0), con_grads=np.zeros((0, 1)), con_curv=np.zeros(0),
            sigma=1.0, alpha=0.0, tau=2.0, lam=np.zeros(0),
        )
        q0, q = eval_model(model, np.array([1.0]))
        assert_allclose(q0, 2.0)
        assert q.size == 0

    def test_minorant_over_random_probes(self):
        prob = qcnp_generate(seed=1, n=10, p=6, num_samples=15, m=3)
        rng = np.random.default_rng(0)
        x_t = prob.domain.sample(rng)
        lam = rng.uniform(0, 1, size=6)
        s = int(rng.integers(prob.num_samples))
        model = build_model(prob, x_t, lam, [s], tau=2.0, sigma=0.1, alpha=1.0)
        for _ in range(100):
            x = prob.domain.sample(rng)
            _, q = eval_model(model, x)
            g = prob.constraint_values(x, s)
            assert np.all(q <= g + 1e-10)

    def test_positive_definiteness_and_convexity_identity(self):
        prob = toy_problem(n=3, p=2, num_samples=3, L=[0.1, 0.5, 0.2], seed=10)
        rng = np.random.default_rng(1)
        for _ in range(20):
            lam = rng.uniform(0, 3, size=2)
            tau = rng.uniform(0.5, 4.0)
            model = build_model(prob, np.zeros(3), lam, [0], tau=tau, sigma=1.0, alpha=1.0)
            assert np.min(model.sigma0.diag()) >= tau
            # diagonal of Sigma_0 + sum_i lam_i Sigma_i equals tau exactly
            combined = model.sigma0.diag() + np.sum(lam * model.con_curv)
            assert_allclose(combined, tau, rtol=0, atol=1e-12)

    def test_batch_averaging_is_linear(self):
        prob = toy_problem(n=3, p=2, num_samples=4, seed=11)
        x_t = np.array([0.3, 0.1, -0.2])
        lam = np.array([0.2, 0.7])
        kw = dict(tau=1.5, sigma=0.5, alpha=2.0)
        m_ab = build_model(prob, x_t, lam, [0, 3], **kw)
        m_a = build_model(prob, x_t, lam, [0], **kw)
        m_b = build_model(prob, x_t, lam, [3], **kw)
        assert_allclose(m_ab.f0, 0.5 * (m_a.f0 + m_b.f0))
        assert_allclose(m_ab.c0, 0.5 * (m_a.c0 + m_b.c0))
        assert_allclose(m_ab.q0_values, 0.5 * (m_a.q0_values + m_b.q0_values))
        assert_allclose(m_ab.con_grads, 0.5 * (m_a.con_grads + m_b.con_grads))


class TestAugLagrangian:
    def test_matches_componentwise_formula(self):
        prob = toy_problem(n=2, p=2, num_samples=3, seed=12)
        lam = np.array([0.4, 0.0])
        model = build_model(prob, np.zeros(2), lam, [1], tau=1.0, sigma=0.7, alpha=1.0)
        x = np.array([0.2, -0.3])
        q0, q = eval_model(model, x)
        expected = q0
        for i in range(2):
            expected += (max(lam[i] + 0.7 * q[i], 0.0) ** 2 - lam[i] ** 2) / (2 * 0.7)
        assert_allclose(aug_lagrangian(model, x), expected)
