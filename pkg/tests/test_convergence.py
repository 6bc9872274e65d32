import numpy as np
import pytest
from scipy.stats import chi2, ncx2

from jcesd.convergence import init_bound_check, marcum_q, random_init_exceedance
from jcesd.errors import InvalidArgumentError, NumericalFailureError, OutOfRegimeError
from jcesd.validation import marcum_monte_carlo


class TestBound:
    def test_zero_perturbation(self):
        lhs, rhs = init_bound_check(np.eye(3), np.zeros((3, 3)))
        assert lhs == 0 and rhs == 0

    def test_scalar(self):
        lhs, rhs = init_bound_check([[2.0]], [[0.01]])
        assert lhs == pytest.approx(abs(1 / 2.01 - 1 / 2), rel=1e-12)
        assert lhs == pytest.approx(0.002488, abs=1e-6)
        assert rhs == pytest.approx(0.0025, rel=1e-12)

    def test_out_of_regime(self):
        with pytest.raises(OutOfRegimeError):
            init_bound_check(np.eye(2), -np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            init_bound_check(np.eye(2), np.eye(3))

    def test_second_order_slack(self):
        g = np.random.default_rng(0)
        for _ in range(200):
            H = g.standard_normal((3, 3)) + 1j * g.standard_normal((3, 3))
            D = g.standard_normal((3, 3)) + 1j * g.standard_normal((3, 3))
            D *= 0.02 / np.linalg.norm(np.linalg.inv(H), 2) / np.linalg.norm(D, 2)
            lhs, rhs = init_bound_check(H, D)
            assert lhs <= rhs * (1 + 10 * np.linalg.norm(np.linalg.inv(H) @ D, 2))


class TestMarcum:
    @pytest.mark.parametrize("M, b", [(1, 0.5), (2, 2.0), (4, 3.0)])
    def test_zero_noncentrality(self, M, b):
        assert marcum_q(M, 0.0, b) == pytest.approx(chi2.sf(b * b, 2 * M), abs=1e-12)

    @pytest.mark.parametrize("M, a, b", [(1, 1.0, 1.0), (4, 2.0, 3.0), (9, 5.0, 4.0),
                                         (16, 10.0, 12.0), (2, 30.0, 29.0)])
    def test_noncentral_reference(self, M, a, b):
        assert marcum_q(M, a, b) == pytest.approx(ncx2.sf(b * b, 2 * M, a * a), abs=1e-9)

    def test_limits(self):
        assert marcum_q(4, 1.0, 0.0) == pytest.approx(1.0)
        assert marcum_q(4, 1.0, 60.0) < 1e-100

    def test_monte_carlo(self):
        g = np.random.default_rng(1)
        assert marcum_q(4, 2.0, 3.0) == pytest.approx(marcum_monte_carlo(4, 2.0, 3.0, 200_000, g),
                                                      abs=5e-3)

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            marcum_q(0, 1.0, 1.0)

    def test_term_cap(self):
        with pytest.raises(NumericalFailureError):
            marcum_q(2, 50.0, 50.0, max_terms=5)


class TestRandomInit:
    def test_far_epsilon(self):
        assert random_init_exceedance(1e3, 1.0, 2 * np.eye(2) / np.sqrt(2)) < 1e-12

    def test_zero_target_is_central(self):
        p = random_init_exceedance(1.0, 1.0, np.zeros((2, 2)))
        assert p == pytest.approx(chi2.sf(2.0, 8), abs=1e-12)

    def test_against_sampling(self):
        g = np.random.default_rng(2)
        U = np.array([[np.sqrt(2), 0], [0, np.sqrt(2)]], dtype=complex)  # ||U||_F = 2
        n = 400_000
        R = (g.standard_normal((n, 2, 2)) + 1j * g.standard_normal((n, 2, 2))) / np.sqrt(2)
        dist = np.linalg.norm((R - U).reshape(n, -1), axis=1)
        assert random_init_exceedance(1.0, 1.0, U) == pytest.approx(np.mean(dist > 1.0), abs=3e-3)

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            random_init_exceedance(0.0, 1.0, np.eye(2))
