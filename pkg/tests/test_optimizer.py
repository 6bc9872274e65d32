import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize, nnls as scipy_nnls

from jcesd.errors import (
    DegenerateSamplesError,
    InfeasibleStartError,
    InvalidArgumentError,
    SingularMatrixError,
    StructureViolationError,
)
from jcesd.modem import augment, make_constellation
from jcesd.optimizer import (
    CONVERGED,
    FittingProblem,
    channel_from_fit,
    complex_extract,
    constraint_matrix,
    least_distance,
    matrix_from_params,
    nnls,
    objective_and_gradient,
    params_from_matrix,
    qp_step,
    real_embed,
    real_stack,
    solve,
    structure_violation,
)
from jcesd.receiver import feasible_start
from jcesd.validation import admissible_transforms, corner_rich_symbols, random_channel


def cplx(g, n):
    return random_channel(n, g)


class TestEmbedding:
    def test_identity(self):
        assert np.array_equal(real_embed(np.eye(3)), np.eye(6))

    def test_imaginary_unit(self):
        E = real_embed(1j * np.eye(2))
        Z, I = np.zeros((2, 2)), np.eye(2)
        assert np.array_equal(E, np.block([[Z, -I], [I, Z]]))

    @given(st.integers(1, 4), st.integers(0, 10_000))
    @settings(max_examples=30)
    def test_determinant_identity(self, n, seed):
        A = cplx(np.random.default_rng(seed), n)
        assert np.linalg.det(real_embed(A)) == pytest.approx(abs(np.linalg.det(A)) ** 2, rel=1e-9)

    @given(st.integers(1, 4), st.integers(0, 10_000))
    @settings(max_examples=30)
    def test_extract_roundtrip(self, n, seed):
        A = cplx(np.random.default_rng(seed), n)
        assert np.allclose(complex_extract(real_embed(A)), A)

    def test_extract_identity(self):
        assert np.allclose(complex_extract(np.eye(4)), np.eye(2))

    def test_extract_rejects_unstructured(self):
        U = np.eye(4)
        U[0, 1] = 0.5
        with pytest.raises(StructureViolationError):
            complex_extract(U)

    def test_channel_from_fit_is_block_average(self):
        g = np.random.default_rng(3)
        A = cplx(g, 3)
        U = real_embed(A)
        Ui = np.linalg.inv(U)
        n = 3
        ref = (Ui[:n, :n] + Ui[n:, n:]) / 2 + 1j * (Ui[n:, :n] - Ui[:n, n:]) / 2
        assert np.allclose(channel_from_fit(U), ref)
        assert np.allclose(channel_from_fit(U), np.linalg.inv(complex_extract(U)), atol=1e-10)

    def test_real_stack(self):
        Y = np.array([[1 + 2j, 3 - 1j]])
        assert np.array_equal(real_stack(Y), [[1, 3], [2, -1]])

    def test_params_roundtrip(self):
        U = real_embed(cplx(np.random.default_rng(0), 2))
        assert np.array_equal(matrix_from_params(params_from_matrix(U), 2), U)
        assert structure_violation(U) == 0


class TestObjective:
    def test_identity(self):
        val, grad = objective_and_gradient(params_from_matrix(np.eye(4)), 2)
        assert val == pytest.approx(0.0, abs=1e-15)
        # (U^-1)^T = I pulled back: dA = 2 I, dB = 0
        assert np.allclose(grad, np.concatenate([2 * np.eye(2).ravel(), np.zeros(4)]))

    def test_scaled_identity(self):
        val, _ = objective_and_gradient(np.array([2.0, 0.0]), 1)
        assert val == pytest.approx(np.log(4))

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_gradient_finite_differences(self, n):
        g = np.random.default_rng(n)
        for _ in range(5):
            x = params_from_matrix(real_embed(cplx(g, n)))
            _, grad = objective_and_gradient(x, n)
            fd = np.array([(objective_and_gradient(x + h, n)[0] - objective_and_gradient(x - h, n)[0]) / 2e-6
                           for h in 1e-6 * np.eye(x.size)])
            assert np.max(np.abs(grad - fd)) <= 1e-6 * np.max(np.abs(fd))

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            objective_and_gradient(np.zeros(8), 2)


class TestConstraintMatrix:
    @given(st.integers(1, 3), st.integers(1, 7), st.integers(0, 10_000))
    @settings(max_examples=30)
    def test_rows_reproduce_products(self, n, m, seed):
        g = np.random.default_rng(seed)
        x = g.standard_normal(2 * n * n)
        S = g.standard_normal((2 * n, m))
        C = constraint_matrix(S, n)
        assert np.allclose(C @ x, (matrix_from_params(x, n) @ S).T.ravel())


class TestNnls:
    @pytest.mark.parametrize("seed", range(25))
    def test_matches_reference(self, seed):
        g = np.random.default_rng(seed)
        m, n = g.integers(3, 12), g.integers(2, 10)
        A = g.standard_normal((m, n))
        b = g.standard_normal(m)
        x, _ = nnls(A, b)
        ref, _ = scipy_nnls(A, b)
        assert np.all(x >= 0)
        assert np.linalg.norm(A @ x - b) == pytest.approx(np.linalg.norm(A @ ref - b), abs=1e-9)

    def test_least_distance_infeasible(self):
        z, _ = least_distance(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]))
        assert z is None

    def test_least_distance_projection(self):
        z, _ = least_distance(np.array([[1.0, 1.0]]), np.array([2.0]))
        assert np.allclose(z, [1.0, 1.0])

    def test_qp_against_kkt(self):
        g = np.random.default_rng(7)
        for _ in range(20):
            n = 4
            M = g.standard_normal((n, n))
            H = M @ M.T + np.eye(n)
            q = g.standard_normal(n)
            G = g.standard_normal((6, n))
            h = np.abs(g.standard_normal(6)) + 0.1
            d = qp_step(H, q, G, h)
            res = minimize(lambda v: 0.5 * v @ H @ v + q @ v, np.zeros(n), jac=lambda v: H @ v + q,
                           constraints=[{"type": "ineq", "fun": lambda v: h - G @ v,
                                         "jac": lambda v: -G}], method="SLSQP",
                           options={"ftol": 1e-14, "maxiter": 500})
            assert np.allclose(d, res.x, atol=1e-6)


def _cube_problem(n):
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=2 * n))).T
    return FittingProblem(signs, 1.0, n)


class TestSolve:
    @pytest.mark.parametrize("n", [1, 2])
    def test_cube_is_its_own_fit(self, n):
        sol = solve(_cube_problem(n), np.eye(2 * n) / 2)
        assert sol.status == CONVERGED
        # the optimum is unique up to signed permutations preserving the structure
        assert abs(abs(np.linalg.det(sol.U)) - 1) < 1e-6
        assert np.allclose(np.abs(sol.U) @ np.ones(2 * n), 1, atol=1e-6)

    def test_infeasible_start(self):
        with pytest.raises(InfeasibleStartError):
            solve(_cube_problem(1), 2 * np.eye(2))

    def test_unstructured_start(self):
        U0 = np.eye(2) * 0.5
        U0[0, 1] = 0.1
        with pytest.raises(StructureViolationError):
            solve(_cube_problem(1), U0)

    def test_degenerate_samples(self):
        S = np.ones((4, 10))
        with pytest.raises(DegenerateSamplesError):
            solve(FittingProblem(S, 1.0, 2), 0.01 * np.eye(4))

    def test_bad_problem(self):
        with pytest.raises(InvalidArgumentError):
            FittingProblem(np.ones((3, 4)), 1.0, 2)
        with pytest.raises(InvalidArgumentError):
            FittingProblem(np.ones((4, 4)), 0.0, 2)

    def _noiseless(self, n, seed, M=4):
        g = np.random.default_rng(seed)
        c = make_constellation(M)
        H = cplx(g, n)
        X = corner_rich_symbols(c, n, 64, g)
        S = real_stack(H @ X)
        U0 = feasible_start(real_embed(np.linalg.inv(H + 0.1 * cplx(g, n))), S, c.boundary)
        return H, S, U0, c

    @pytest.mark.parametrize("n", [1, 2])
    @pytest.mark.parametrize("seed", range(5))
    def test_noiseless_admissible_transform(self, n, seed):
        H, S, U0, c = self._noiseless(n, seed)
        sol = solve(FittingProblem(S, c.boundary, n), U0)
        M = sol.U @ real_embed(H)
        assert min(np.linalg.norm(M - real_embed(T)) for T in admissible_transforms(n)) < 1e-4

    @pytest.mark.parametrize("seed", range(4))
    def test_invariants_along_the_path(self, seed):
        g = np.random.default_rng(seed)
        c = make_constellation(16)
        H = cplx(g, 2)
        X = c.points[g.integers(0, 16, (2, 60))]
        Y = H @ X + 0.05 * (g.standard_normal((2, 60)) + 1j * g.standard_normal((2, 60)))
        S = real_stack(augment(Y))
        b = c.boundary + 0.05
        U0 = feasible_start(real_embed(np.linalg.inv(H)), S, b)
        prob = FittingProblem(S, b, 2)
        sol = solve(prob, U0)
        assert structure_violation(sol.U) == 0
        assert np.abs(sol.U @ S).max() <= b + prob.constraint_tol
        hist = np.array(sol.history)
        assert np.all(np.diff(hist) >= -prob.step_tol)
        assert sol.objective >= objective_and_gradient(params_from_matrix(U0), 2)[0]

    @pytest.mark.parametrize("seed", range(4))
    def test_kkt_point(self, seed):
        """Gradient lies in the cone of active constraint normals (reference NNLS)."""
        g = np.random.default_rng(100 + seed)
        c = make_constellation(16)
        H = cplx(g, 2)
        X = c.points[g.integers(0, 16, (2, 80))]
        Y = H @ X + 0.03 * (g.standard_normal((2, 80)) + 1j * g.standard_normal((2, 80)))
        S = real_stack(Y)
        b = c.boundary + 0.03
        sol = solve(FittingProblem(S, b, 2), feasible_start(real_embed(np.linalg.inv(H)), S, b))
        x = params_from_matrix(sol.U)
        _, grad = objective_and_gradient(x, 2)
        C = constraint_matrix(S, 2)
        G = np.vstack([C, -C])
        active = b - G @ x <= 1e-7
        mu, res = scipy_nnls(G[active].T, grad)
        assert res <= 1e-5 * np.linalg.norm(grad)

    def test_matches_reference_solver_objective(self):
        """On noiseless data the global optimum is known; both solvers reach it."""
        H, S, U0, c = self._noiseless(2, 11)
        mine = solve(FittingProblem(S, c.boundary, 2), U0)
        C = constraint_matrix(S, 2)
        res = minimize(lambda v: -objective_and_gradient(v, 2)[0], params_from_matrix(U0),
                       jac=lambda v: -objective_and_gradient(v, 2)[1], method="SLSQP",
                       constraints=[{"type": "ineq", "fun": lambda v: c.boundary - C @ v},
                                    {"type": "ineq", "fun": lambda v: c.boundary + C @ v}],
                       options={"ftol": 1e-12, "maxiter": 500})
        assert mine.objective == pytest.approx(-res.fun, abs=1e-6)

    def test_homogeneity(self):
        H, S, U0, c = self._noiseless(2, 4)
        a = solve(FittingProblem(S, c.boundary, 2), U0)
        b = solve(FittingProblem(3 * S, 3 * c.boundary, 2), U0)
        assert np.allclose(a.U, b.U, atol=1e-6)

    def test_working_set_does_not_change_result(self):
        H, S, U0, c = self._noiseless(2, 6)
        a = solve(FittingProblem(S, c.boundary, 2), U0)
        b = solve(FittingProblem(S, c.boundary, 2, active_fraction=None), U0)
        assert a.objective == pytest.approx(b.objective, abs=1e-7)
