import math

import numpy as np
import pytest

from funnelkit.plants import (BifPlant, Example2Plant, RefComponent, bif_plant_rhs,
                              example2_plant_rhs, linear_to_bif, make_reference,
                              nullspace_basis, reference_derivs)
from funnelkit.simloop import integrate


def small_bif(r=2, m=1, n_eta=1, seed=0):
    rng = np.random.default_rng(seed)
    R = tuple(rng.standard_normal((m, m)) for _ in range(r))
    S = rng.standard_normal((m, n_eta))
    Q_int = -np.diag(rng.uniform(1.0, 3.0, n_eta))
    P_int = rng.standard_normal((n_eta, m))
    return BifPlant(r=r, m=m, R=R, S=S, Q_int=Q_int, P_int=P_int,
                    Gamma=np.eye(m) * 1.5)


class TestBifPlant:
    def test_zero_state_zero_input(self):
        plant = small_bif()
        dxi, deta = bif_plant_rhs(plant, np.zeros((2, 1)), np.zeros(1),
                                  np.zeros(1), 0.0)
        assert not dxi.any() and not deta.any()

    def test_pure_chain_without_internal_dynamics(self):
        plant = BifPlant(r=3, m=1, R=(np.zeros((1, 1)),) * 3, S=np.zeros((1, 0)),
                         Q_int=np.zeros((0, 0)), P_int=np.zeros((0, 1)),
                         Gamma=np.array([[1.0]]))
        xi = np.array([[0.3], [-0.5], [0.7]])
        dxi, deta = bif_plant_rhs(plant, xi, np.zeros(0), np.array([2.0]), 1.0)
        assert np.allclose(dxi, [[-0.5], [0.7], [2.0]])
        assert deta.size == 0

    def test_single_step_hand_evaluation(self):
        plant = small_bif(seed=4)
        xi = np.array([[0.4], [-0.2]])
        eta = np.array([0.6])
        u = np.array([0.9])
        t = 0.0
        dxi, deta = bif_plant_rhs(plant, xi, eta, u, t)
        assert dxi[0, 0] == pytest.approx(-0.2)
        top = (plant.R[0][0, 0] * 0.4 + plant.R[1][0, 0] * (-0.2)
               + plant.S[0, 0] * 0.6 + plant.Gamma[0, 0] * 0.9)
        assert dxi[1, 0] == pytest.approx(top, rel=1e-14)
        assert deta[0] == pytest.approx(plant.Q_int[0, 0] * 0.6 + plant.P_int[0, 0] * 0.4,
                                        rel=1e-14)

    def test_linearity_in_state_and_input(self):
        plant = small_bif(r=3, m=2, n_eta=2, seed=9)
        rng = np.random.default_rng(10)

        def rhs_vec(x, u):
            xi = x[:6].reshape(3, 2)
            eta = x[6:]
            dxi, deta = bif_plant_rhs(plant, xi, eta, u, 0.0)
            return np.concatenate([dxi.ravel(), deta])

        x1, x2 = rng.standard_normal(8), rng.standard_normal(8)
        u1, u2 = rng.standard_normal(2), rng.standard_normal(2)
        a, b = 0.7, -1.3
        left = rhs_vec(a * x1 + b * x2, a * u1 + b * u2)
        right = a * rhs_vec(x1, u1) + b * rhs_vec(x2, u2)
        assert np.allclose(left, right, atol=1e-12)

    def test_unstable_internal_dynamics_rejected(self):
        with pytest.raises(ValueError, match="not minimum phase"):
            BifPlant(r=2, m=1, R=(np.zeros((1, 1)),) * 2, S=np.ones((1, 1)),
                     Q_int=np.array([[0.5]]), P_int=np.ones((1, 1)),
                     Gamma=np.array([[1.0]]))


class TestExample2Plant:
    def test_zero_state_hand_values(self):
        # operator value (1, 0, 0), disturbance (0.2, 0.2) at t = 0
        u = np.array([0.5, -0.25])
        dx = example2_plant_rhs(np.zeros((3, 2)), 0.0, u, 0.0)
        expected_top = np.array([1.2, 0.2]) + Example2Plant.Gamma @ u
        assert np.allclose(dx[:4], 0.0)
        assert np.allclose(dx[4:6], expected_top, atol=1e-14)
        assert dx[6] == 0.0

    def test_internal_state_matches_quadrature(self):
        # freeze xi: eta' = -eta + c with c = ||xi_1||^2 tanh(||xi_3||^2);
        # compare the integrated state against quadrature of the kernel
        xi = np.array([[0.8, -0.4], [0.0, 0.0], [1.1, 0.2]])
        c = float(xi[0] @ xi[0]) * math.tanh(float(xi[2] @ xi[2]))

        def rhs(t, x):
            return np.array([-x[0] + c])

        traj = integrate(rhs, np.zeros(1), (0.0, 3.0), rtol=1e-10, atol=1e-12)
        s = np.linspace(0.0, 3.0, 20001)
        kernel = np.exp(-(3.0 - s)) * c
        quad = np.trapezoid(kernel, s)
        assert traj.xs[-1][0] == pytest.approx(quad, rel=1e-7)

    def test_rhs_wiring(self):
        plant = Example2Plant()
        x = np.arange(7.0) / 10.0
        u = np.array([0.1, 0.2])
        dx = plant.rhs(x, u, 0.3)
        xi, eta = plant.split(x)
        assert np.allclose(dx, example2_plant_rhs(xi, eta, u, 0.3))
        assert np.allclose(plant.output(x), [0.0, 0.1])


def assemble_normal_form(R, S, Q_int, P_int, Gamma):
    """State matrix in normal-form coordinates (for building test systems)."""
    r = len(R)
    m = R[0].shape[0]
    n_eta = Q_int.shape[0]
    n = r * m + n_eta
    A = np.zeros((n, n))
    for i in range(r - 1):
        A[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] = np.eye(m)
    for j in range(r):
        A[(r - 1) * m:r * m, j * m:(j + 1) * m] = R[j]
    A[(r - 1) * m:r * m, r * m:] = S
    A[r * m:, :m] = P_int
    A[r * m:, r * m:] = Q_int
    B = np.zeros((n, m))
    B[(r - 1) * m:r * m] = Gamma
    C = np.zeros((m, n))
    C[:, :m] = np.eye(m)
    return A, B, C


class TestLinearToBif:
    def test_integrator_chain(self):
        n = 4
        A = np.diag(np.ones(n - 1), 1)
        B = np.zeros((n, 1))
        B[-1, 0] = 1.0
        C = np.zeros((1, n))
        C[0, 0] = 1.0
        plant = linear_to_bif(A, B, C)
        assert plant.r == n
        assert plant.n_eta == 0
        assert plant.Gamma[0, 0] == pytest.approx(1.0)
        for Ri in plant.R:
            assert np.allclose(Ri, 0.0, atol=1e-9)

    def test_wrong_expected_degree_rejected(self):
        # direct feedthrough of the chain top: C A^0 B != 0 means r = 1
        A = np.diag(np.ones(1), 1)
        B = np.array([[1.0], [0.0]])
        C = np.array([[1.0, 0.0]])
        with pytest.raises(ValueError, match="no well-defined relative degree"):
            linear_to_bif(A, B, C, expected_r=2)

    def test_simulation_equivalence_after_random_similarity(self):
        rng = np.random.default_rng(21)
        R = (np.array([[0.4]]), np.array([[-0.3]]))
        S = np.array([[0.7, -0.2]])
        Q_int = np.array([[-1.0, 0.4], [0.0, -2.0]])
        P_int = np.array([[0.5], [-0.8]])
        Gamma = np.array([[1.5]])
        A0, B0, C0 = assemble_normal_form(R, S, Q_int, P_int, Gamma)
        T = rng.standard_normal((4, 4)) + 2.0 * np.eye(4)
        A = T @ A0 @ np.linalg.inv(T)
        B = T @ B0
        C = C0 @ np.linalg.inv(T)

        plant = linear_to_bif(A, B, C)
        assert plant.r == 2
        assert plant.n_eta == 2

        u = lambda t: math.sin(t)

        def rhs_original(t, x):
            return A @ x + B @ np.array([u(t)])

        def rhs_plant(t, x):
            return plant.rhs(x, np.array([u(t)]), t)

        traj_a = integrate(rhs_original, np.zeros(4), (0.0, 5.0), rtol=1e-9, atol=1e-12)
        traj_b = integrate(rhs_plant, plant.init_state(), (0.0, 5.0),
                           rtol=1e-9, atol=1e-12)
        for t in np.linspace(0.0, 5.0, 60):
            ya = float((C @ traj_a.at(t))[0])
            yb = float(plant.output(traj_b.at(t))[0])
            assert ya == pytest.approx(yb, abs=1e-6)

    def test_disturbance_entering_at_input_level(self):
        # d with C d = 0 only shifts the top chain row and the internal
        # dynamics: the transformed realization must still match
        rng = np.random.default_rng(33)
        R = (np.array([[0.2]]), np.array([[-0.5]]))
        S = np.array([[0.4, 0.1]])
        Q_int = np.array([[-1.5, 0.2], [0.1, -0.8]])
        P_int = np.array([[0.3], [-0.6]])
        Gamma = np.array([[2.0]])
        A0, B0, C0 = assemble_normal_form(R, S, Q_int, P_int, Gamma)
        T = rng.standard_normal((4, 4)) + 2.0 * np.eye(4)
        A = T @ A0 @ np.linalg.inv(T)
        B = T @ B0
        C = C0 @ np.linalg.inv(T)

        direction = nullspace_basis(C)[:, 0]
        d = lambda t: direction * math.cos(2.0 * t)
        plant = linear_to_bif(A, B, C, d=d)

        u = lambda t: math.sin(t)

        def rhs_original(t, x):
            return A @ x + B @ np.array([u(t)]) + d(t)

        def rhs_plant(t, x):
            return plant.rhs(x, np.array([u(t)]), t)

        traj_a = integrate(rhs_original, np.zeros(4), (0.0, 4.0), rtol=1e-9,
                           atol=1e-12)
        traj_b = integrate(rhs_plant, plant.init_state(), (0.0, 4.0),
                           rtol=1e-9, atol=1e-12)
        for t in np.linspace(0.0, 4.0, 40):
            ya = float((C @ traj_a.at(t))[0])
            yb = float(plant.output(traj_b.at(t))[0])
            assert ya == pytest.approx(yb, abs=1e-6)

    def test_non_minimum_phase_rejected(self):
        R = (np.array([[0.0]]), np.array([[0.0]]))
        S = np.array([[1.0]])
        Q_int = np.array([[0.3]])  # unstable internal dynamics
        P_int = np.array([[1.0]])
        Gamma = np.array([[1.0]])
        A0, B0, C0 = assemble_normal_form(R, S, Q_int, P_int, Gamma)
        with pytest.raises(ValueError, match="not minimum phase"):
            linear_to_bif(A0, B0, C0)

    def test_nullspace_basis(self):
        M = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 1.0]])
        V = nullspace_basis(M)
        assert V.shape == (3, 1)
        assert np.allclose(M @ V, 0.0, atol=1e-12)


class TestReferenceSignals:
    def test_bump_extremum(self):
        spec = make_reference([{"kind": "gaussian-bump", "t0": 5.0}])
        d = reference_derivs(spec, 5.0, 2)
        assert d[0, 0] == 1.0
        assert d[1, 0] == 0.0
        assert d[2, 0] == pytest.approx(-2.0)

    def test_sine_cycle(self):
        spec = make_reference([{"kind": "sine", "omega": 1.0}])
        t = 0.8
        d = reference_derivs(spec, t, 4)
        assert d[:, 0] == pytest.approx(
            [math.sin(t), math.cos(t), -math.sin(t), -math.cos(t), math.sin(t)])

    def test_constant(self):
        spec = make_reference([{"kind": "constant", "value": 2.5}])
        d = reference_derivs(spec, 1.3, 3)
        assert np.array_equal(d[:, 0], [2.5, 0.0, 0.0, 0.0])

    @pytest.mark.parametrize("component", [
        RefComponent(kind="gaussian-bump", t0=5.0),
        RefComponent(kind="sine", omega=2.3),
    ])
    def test_derivatives_match_finite_differences(self, component):
        rng = np.random.default_rng(6)
        h = 1e-6
        for t in rng.uniform(0.0, 10.0, 100):
            d = component.derivs(t, 3)
            for k in range(1, 4):
                fd = (component.derivs(t + h, k - 1)[k - 1]
                      - component.derivs(t - h, k - 1)[k - 1]) / (2.0 * h)
                scale = max(abs(d[k]), 1e-3)
                assert abs(d[k] - fd) / scale < 1e-6

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown signal kind"):
            make_reference([{"kind": "square"}])
