import time

import numpy as np
import pytest

from funnelkit import matrixlab as ml
from funnelkit.paramdesign import companion_matrix, hurwitz_coefficients

P_GOLDEN = np.array([[1.0, -0.5, -1.0],
                     [-0.5, 1.0, -0.5],
                     [-1.0, -0.5, 4.0]])


class TestKron:
    def test_scalar_identity(self):
        M = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(ml.kron(np.array([[1.0]]), M), M)

    def test_block_structure_by_hand(self):
        # [[1,2],[3,4]] (x) I2: diagonal blocks 1*I2, 4*I2; off-diagonal 2*I2, 3*I2
        K = ml.kron(np.array([[1.0, 2.0], [3.0, 4.0]]), np.eye(2))
        expected = np.array([
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 1.0, 0.0, 2.0],
            [3.0, 0.0, 4.0, 0.0],
            [0.0, 3.0, 0.0, 4.0],
        ])
        assert np.array_equal(K, expected)

    def test_gain_stack_structure(self):
        # p' (x) I_m stacks p_k * I_m blocks
        p = np.array([1.0, 2.0 / 3.0, 1.0 / 3.0])
        stacked = ml.kron(p.reshape(3, 1), np.eye(2))
        assert stacked.shape == (6, 2)
        for k in range(3):
            assert np.allclose(stacked[2 * k:2 * k + 2], p[k] * np.eye(2))

    def test_mixed_product_property(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            A = rng.standard_normal((2, 3))
            B = rng.standard_normal((3, 2))
            C = rng.standard_normal((3, 2))
            D = rng.standard_normal((2, 4))
            left = ml.kron(A, B) @ ml.kron(C, D)
            right = ml.kron(A @ C, B @ D)
            assert np.max(np.abs(left - right)) <= 1e-12 * max(1.0, np.max(np.abs(right)))


class TestSolveLyapunov:
    def test_golden_third_order(self):
        A = companion_matrix([3.0, 3.0, 1.0])
        P = ml.solve_lyapunov(A, np.eye(3))
        assert np.max(np.abs(P - P_GOLDEN)) < 1e-12

    def test_diagonal_balance(self):
        P = ml.solve_lyapunov(-np.eye(4), np.eye(4))
        assert np.allclose(P, 0.5 * np.eye(4), atol=1e-14)

    @pytest.mark.parametrize("a,P_expected", [
        ([9.0, 27.0, 27.0],
         [[4.0, -0.5, -22.0 / 27.0],
          [-0.5, 22.0 / 27.0, -0.5],
          [-22.0 / 27.0, -0.5, 61.0 / 81.0]]),
        ([15.0, 75.0, 125.0],
         [[58.0 / 5.0, -0.5, -136.0 / 125.0],
          [-0.5, 136.0 / 125.0, -0.5],
          [-136.0 / 125.0, -0.5, 1333.0 / 3125.0]]),
    ])
    def test_golden_pole_placements(self, a, P_expected):
        P = ml.solve_lyapunov(companion_matrix(a), np.eye(3))
        assert np.max(np.abs(P - np.array(P_expected))) < 1e-12

    def test_residual_on_random_stable_matrices(self):
        rng = np.random.default_rng(3)
        for _ in range(8):
            n = int(rng.integers(2, 7))
            # stable by construction: negative diagonal dominating a random part
            A = rng.standard_normal((n, n)) - np.diag(rng.uniform(1.0, 5.0, n) + n)
            Q = np.eye(n)
            P = ml.solve_lyapunov(A, Q)
            res = ml.frobenius(A.T @ P + P @ A + Q)
            assert res <= 1e-10 * (1.0 + ml.frobenius(Q))
            assert ml.frobenius(P - P.T) <= 1e-12 * max(1.0, ml.frobenius(P))
            assert ml.sym_eig(P)[0] > 0.0

    def test_singular_pairing_rejected(self):
        # A and -A share eigenvalues {1, -1}: no unique solution
        A = np.diag([1.0, -1.0])
        with pytest.raises(ValueError, match="not uniquely solvable"):
            ml.solve_lyapunov(A, np.eye(2))

    def test_asymmetric_q_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            ml.solve_lyapunov(-np.eye(2), np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_runtime_under_one_millisecond(self):
        A = companion_matrix([3.0, 3.0, 1.0])
        Q = np.eye(3)
        ml.solve_lyapunov(A, Q)  # warm-up
        timings = []
        for _ in range(10):
            start = time.perf_counter()
            ml.solve_lyapunov(A, Q)
            timings.append(time.perf_counter() - start)
        assert min(timings) < 1e-3


class TestSpectralNorm:
    def test_identity(self):
        assert ml.spectral_norm(np.eye(5)) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        assert ml.spectral_norm(np.diag([2.0, -3.0])) == pytest.approx(3.0, abs=1e-12)

    def test_antidiagonal_mismatch_matrix(self):
        # symmetric with eigenvalues +-0.1, so the norm is 0.1
        G = np.array([[0.0, -0.1], [-0.1, 0.0]])
        assert ml.spectral_norm(G) == pytest.approx(0.1, abs=1e-14)

    def test_matches_largest_symmetric_eigenvalue(self):
        rng = np.random.default_rng(11)
        for _ in range(6):
            n = int(rng.integers(2, 6))
            M = rng.standard_normal((n, n))
            M = (M + M.T) / 2.0
            w = ml.sym_eig(M)
            assert ml.spectral_norm(M) == pytest.approx(max(abs(w[0]), abs(w[-1])),
                                                        rel=1e-10)

    def test_rectangular(self):
        rng = np.random.default_rng(12)
        M = rng.standard_normal((3, 5))
        assert ml.spectral_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-10)


class TestSymEig:
    def test_sorted_diagonal(self):
        assert np.allclose(ml.sym_eig(np.diag([3.0, 1.0, 2.0])), [1.0, 2.0, 3.0])

    def test_two_by_two_by_hand(self):
        # char poly (2-l)^2 - 1 -> eigenvalues 1 and 3
        w = ml.sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(w, [1.0, 3.0], atol=1e-12)

    def test_golden_lyapunov_matrix_positive(self):
        assert ml.sym_eig(P_GOLDEN)[0] > 0.0

    def test_residual_and_orthogonality(self):
        rng = np.random.default_rng(5)
        for _ in range(6):
            n = int(rng.integers(2, 12))
            M = rng.standard_normal((n, n))
            M = (M + M.T) / 2.0
            w, V = ml.sym_eig(M, with_vectors=True)
            scale = ml.frobenius(M)
            for i in range(n):
                assert np.linalg.norm(M @ V[:, i] - w[i] * V[:, i]) <= 1e-9 * max(1.0, scale)
            assert np.max(np.abs(V.T @ V - np.eye(n))) < 1e-10

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="requires symmetric"):
            ml.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestIsHurwitz:
    def test_stable_companion(self):
        assert ml.is_hurwitz(companion_matrix([9.0, 27.0, 27.0])).stable

    def test_rotation_is_marginal(self):
        res = ml.is_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert not res.stable
        assert res.marginal

    def test_unstable_diagonal(self):
        assert not ml.is_hurwitz(np.diag([-1.0, -2.0, 5.0]))

    def test_empty_matrix_vacuously_stable(self):
        assert ml.is_hurwitz(np.zeros((0, 0))).stable

    @pytest.mark.parametrize("r", [2, 3, 4, 5, 6])
    @pytest.mark.parametrize("s0", [0.5, 1.0, 3.0, 7.0])
    def test_generated_companions_always_stable(self, r, s0):
        assert ml.is_hurwitz(companion_matrix(hurwitz_coefficients(r, s0))).stable

    def test_characteristic_polynomial_of_companion(self):
        a = hurwitz_coefficients(4, 2.0)
        coeffs = ml.characteristic_polynomial(companion_matrix(a))
        assert np.allclose(coeffs, a, rtol=1e-12)
