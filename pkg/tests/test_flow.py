import numpy as np
import pytest

from gnflow import gallery
from gnflow.flow import (
    SolverState,
    coupled_rhs,
    diagnostics,
    direct_rhs,
    gauss_newton_operator,
    initial_inverse,
    mismatch_operator,
    scaled_identity_inverse,
)
from gnflow.integrator import IntegratorConfig, integrate
from gnflow.problem import NonlinearProblem
from gnflow.schedule import PowerSchedule, frozen


def affine_problem(A, xhat):
    A = np.asarray(A, dtype=float)
    return NonlinearProblem(
        dim=A.shape[0],
        f=lambda x: A @ (x - xhat),
        jac=lambda x: A.copy(),
        known_solution=xhat,
    )


def identity_problem(n=3):
    xhat = 1.0 + np.arange(n) / n
    return affine_problem(np.eye(n), xhat), xhat


class TestGaussNewtonOperator:
    def test_identity_problem(self):
        p, xhat = identity_problem()
        assert np.allclose(gauss_newton_operator(p, xhat, 1.0), 2.0 * np.eye(3))

    def test_diagonal_affine(self):
        p = affine_problem(np.diag([2.0, 0.0]), np.zeros(2))
        M = gauss_newton_operator(p, np.ones(2), 0.5)
        assert np.allclose(M, np.diag([4.5, 0.5]))

    def test_symmetry_and_spectrum(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            n = int(rng.integers(2, 9))
            J = rng.standard_normal((n, n))
            p = affine_problem(J, np.zeros(n))
            M = gauss_newton_operator(p, np.zeros(n), 0.1)
            assert np.max(np.abs(M - M.T)) <= 1e-13
            assert np.min(np.linalg.eigvalsh(M)) >= 0.1 - 1e-10


class TestDirectRhs:
    def test_stationary_at_anchored_root(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        assert np.allclose(direct_rhs(p, s, xhat, xhat, 0.0), 0.0, atol=1e-14)

    def test_identity_closed_form(self):
        # anchored at the root, the identity flow is plain exponential decay
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.3, c1=2.0, a=1.0)
        rng = np.random.default_rng(1)
        for t in (0.0, 1.0, 7.5):
            x = xhat + rng.standard_normal(3)
            assert np.allclose(direct_rhs(p, s, xhat, x, t), -(x - xhat), atol=1e-12)

    def test_against_dense_inverse_oracle(self):
        rng = np.random.default_rng(2)
        s = PowerSchedule(c0=0.2, c1=1.0, a=1.0)
        for _ in range(10):
            n = int(rng.integers(2, 11))
            A = rng.standard_normal((n, n))
            xhat = rng.standard_normal(n)
            p = affine_problem(A, xhat)
            x0 = rng.standard_normal(n)
            x = rng.standard_normal(n)
            t = float(rng.uniform(0, 5))
            eps = s.eps(t)
            rhs = A.T @ (A @ (x - xhat)) + eps * (x - x0)
            oracle = -np.linalg.inv(A.T @ A + eps * np.eye(n)) @ rhs
            got = direct_rhs(p, s, x0, x, t)
            assert np.linalg.norm(got - oracle) <= 1e-9 * (1 + np.linalg.norm(oracle))


class TestCoupledRhs:
    def test_stationary_pair(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        eps0 = s.eps(0.0)
        B = np.eye(3) / (1.0 + eps0)
        x_dot, B_dot = coupled_rhs(p, s, xhat, SolverState(t=0.0, x=xhat, B=B))
        assert np.allclose(x_dot, 0.0, atol=1e-14)
        assert np.allclose(B_dot, 0.0, atol=1e-14)

    def test_identity_inverse_track_closed_form(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        eps0 = s.eps(0.0)
        for beta in (0.2, 1.0, 1.0 / (1.0 + eps0)):
            st = SolverState(t=0.0, x=xhat, B=beta * np.eye(3))
            _, B_dot = coupled_rhs(p, s, xhat, st)
            expected = -((1.0 + eps0) * beta - 1.0) * np.eye(3)
            assert np.allclose(B_dot, expected, atol=1e-14)

    def test_equivalence_oracle_random_affine(self):
        # with B the exact regularized inverse the coupled velocity matches
        # the direct one and the inverse track is stationary
        rng = np.random.default_rng(3)
        s = PowerSchedule(c0=0.5, c1=1.0, a=1.0)
        for _ in range(20):
            n = int(rng.integers(2, 11))
            A = rng.standard_normal((n, n))
            xhat = rng.standard_normal(n)
            p = affine_problem(A, xhat)
            x0 = rng.standard_normal(n)
            x = rng.standard_normal(n)
            t = float(rng.uniform(0, 3))
            eps = s.eps(t)
            B = np.linalg.inv(A.T @ A + eps * np.eye(n))
            x_dot, B_dot = coupled_rhs(p, s, x0, SolverState(t=t, x=x, B=B))
            ref = direct_rhs(p, s, x0, x, t)
            assert np.linalg.norm(x_dot - ref) <= 1e-10 * (1 + np.linalg.norm(ref))
            assert np.linalg.norm(B_dot, 2) <= 1e-10

    def test_requires_inverse_track(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        with pytest.raises(ValueError, match="inverse track"):
            coupled_rhs(p, s, xhat, SolverState(t=0.0, x=xhat, B=None))

    def test_gain_scales_inverse_update(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        st = SolverState(t=0.0, x=xhat, B=np.eye(3))
        _, full = coupled_rhs(p, s, xhat, st, gain=1.0)
        _, half = coupled_rhs(p, s, xhat, st, gain=0.5)
        assert np.allclose(half, 0.5 * full)


class TestInitialInverse:
    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((5, 5))
        p = affine_problem(A, np.zeros(5))
        B0 = initial_inverse(p, np.zeros(5), 0.1)
        oracle = np.linalg.inv(A.T @ A + 0.1 * np.eye(5))
        assert np.allclose(B0, oracle, atol=1e-10)

    def test_scaled_identity_mode(self):
        p, xhat = identity_problem()
        B0 = scaled_identity_inverse(p, xhat, 0.5)
        assert np.allclose(B0, np.eye(3) / 1.5, atol=1e-8)


class TestDiagnostics:
    def test_exact_inverse_at_solution(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        eps0 = s.eps(0.0)
        st = SolverState(t=0.0, x=xhat, B=np.eye(3) / (1.0 + eps0))
        d = diagnostics(p, s, st, xhat)
        assert d.lambda_norm == pytest.approx(0.0, abs=1e-12)
        assert d.inverse_residual == pytest.approx(0.0, abs=1e-12)
        assert d.err_norm == 0.0

    def test_zero_inverse_track(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        st = SolverState(t=0.0, x=xhat, B=np.zeros((3, 3)))
        d = diagnostics(p, s, st, xhat)
        assert d.lambda_norm == pytest.approx(1.0, rel=1e-9)
        assert d.inverse_residual == pytest.approx(1.0, rel=1e-9)

    def test_optional_fields_without_solution(self):
        p, xhat = identity_problem()
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        st = SolverState(t=0.0, x=xhat + 1.0, B=np.eye(3))
        d = diagnostics(p, s, st, xhat=None)
        assert d.err_norm is None and d.lambda_norm is None and d.D_norm is None
        assert d.B_norm is not None and d.inverse_residual is not None

    def test_inverse_norm_bound_along_compliant_run(self):
        # ||B(t)|| stays below 1/eps(t) + ||B(0)|| along a certified run
        label, entry, sched, B0, R = gallery.compliant_suite()[0]
        p, xhat = entry.problem, entry.xhat
        from gnflow.hilbert import op_norm
        b0_norm = op_norm(B0)
        st0 = SolverState(t=0.0, x=entry.default_x0, B=B0)
        cfg = IntegratorConfig(method="rk4", step_h=0.01, horizon_T=20.0, record_every=20)
        traj = integrate(p, sched, st0, cfg, xhat=xhat)
        for _, d in traj.records:
            assert d.B_norm <= 1.0 / d.eps + b0_norm + 1e-8

    def test_projected_gram_bound_along_compliant_run(self):
        # ||B(t) F'(xh)* F'(xh)|| <= k + 2 + eps(0)||B(0)|| on certified runs
        from gnflow import theory
        label, entry, sched, B0, R = [c for c in gallery.compliant_suite()
                                      if "quadratic" in c[0]][0]
        p, xhat = entry.problem, entry.xhat
        cert, _ = theory.certify_with_canonical_R(p, xhat, entry.default_x0, sched, B0)
        st0 = SolverState(t=0.0, x=entry.default_x0, B=B0)
        cfg = IntegratorConfig(method="rk4", step_h=0.01, horizon_T=20.0, record_every=20)
        traj = integrate(p, sched, st0, cfg, xhat=xhat)
        bound = cert.k + 2.0 + cert.eps0 * cert.B0_norm
        for _, d in traj.records:
            assert d.D_norm <= bound + 1e-6


class TestFlowInvariants:
    def test_symmetry_preserved_affine(self):
        # constant Gram operator keeps a symmetric inverse track symmetric
        rng = np.random.default_rng(5)
        A = rng.standard_normal((4, 4))
        xhat = rng.standard_normal(4)
        p = affine_problem(A, xhat)
        s = PowerSchedule(c0=0.1, c1=1.0, a=1.0)
        x0 = xhat + 0.1 * rng.standard_normal(4)
        B0 = initial_inverse(p, x0, s.eps(0.0))
        st0 = SolverState(t=0.0, x=x0, B=B0)
        cfg = IntegratorConfig(method="rk4", step_h=0.01, horizon_T=10.0, record_every=100)
        traj = integrate(p, s, st0, cfg, xhat=xhat)
        for st, _ in traj.records:
            assert np.max(np.abs(st.B - st.B.T)) <= 1e-9

    def test_symmetry_nearly_preserved_small_drift_nonlinear(self):
        # the Gram operator varies along a nonlinear trajectory and its
        # values at different times do not commute, so symmetry of the
        # inverse track survives only up to the commutator scale (exact
        # preservation needs a constant Jacobian, covered above)
        label, entry, sched, B0, R = [c for c in gallery.compliant_suite()
                                      if "quadratic" in c[0]][0]
        st0 = SolverState(t=0.0, x=entry.default_x0, B=B0)
        cfg = IntegratorConfig(method="rk4", step_h=0.01, horizon_T=20.0, record_every=100)
        traj = integrate(entry.problem, sched, st0, cfg, xhat=entry.xhat)
        for st, _ in traj.records:
            assert np.max(np.abs(st.B - st.B.T)) <= 1e-5

    def test_frozen_eps_affine_reaches_tikhonov_point(self):
        # with eps frozen, x(t) settles at the regularized normal-equations
        # solution: (A*A + eps0 I)(x* - x0) = -A*F(x0)
        rng = np.random.default_rng(6)
        A = rng.standard_normal((4, 4))
        xhat = rng.standard_normal(4)
        p = affine_problem(A, xhat)
        eps0 = 0.25
        s = frozen(eps0)
        x0 = xhat + rng.standard_normal(4)
        M = A.T @ A + eps0 * np.eye(4)
        x_star = x0 + np.linalg.solve(M, -(A.T @ (A @ (x0 - xhat))))
        st0 = SolverState(t=0.0, x=x0, B=None)
        cfg = IntegratorConfig(method="rk4", step_h=0.05, horizon_T=100.0,
                               record_every=10**9)
        traj = integrate(p, s, st0, cfg, xhat=xhat)
        assert np.linalg.norm(traj.final_state.x - x_star) <= 1e-6

    def test_frozen_eps_coupled_matches_direct_limit(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((3, 3))
        xhat = rng.standard_normal(3)
        p = affine_problem(A, xhat)
        eps0 = 0.25
        s = frozen(eps0)
        x0 = xhat + rng.standard_normal(3)
        M = A.T @ A + eps0 * np.eye(3)
        x_star = x0 + np.linalg.solve(M, -(A.T @ (A @ (x0 - xhat))))
        B0 = initial_inverse(p, x0, eps0)
        st0 = SolverState(t=0.0, x=x0, B=B0)
        cfg = IntegratorConfig(method="rk4", step_h=0.05, horizon_T=100.0,
                               record_every=10**9)
        traj = integrate(p, s, st0, cfg, xhat=xhat)
        assert np.linalg.norm(traj.final_state.x - x_star) <= 1e-6


class TestMismatchOperator:
    def test_exact_inverse_zeroes_mismatch(self):
        p, xhat = identity_problem()
        L = mismatch_operator(p, xhat, np.eye(3) / 1.1, 0.1)
        assert np.allclose(L, 0.0, atol=1e-12)
