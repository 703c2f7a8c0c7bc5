"""Plant realizations with stable internal dynamics, plus reference signals.

The common normal form splits a relative-degree-r system into an
integrator chain on the output and internal dynamics driven by the output:

    xi_i'   = xi_{i+1}                       i = 1..r-1
    xi_r'   = sum_j R_j xi_j + S eta + Gamma u + d_r(t)
    eta'    = Q_int eta + P_int xi_1 + d_eta(t)
    y       = xi_1

``linear_to_bif`` carries a minimum-phase linear state-space triple (A, B, C)
into this form.  ``Example2Plant`` is a fixed nonlinear two-output plant of
relative degree three whose memory operator is realized by one auxiliary
first-order state.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import matrixlab as ml

RANK_PIVOT_REL_TOL = 1e-10


# ---------------------------------------------------------------------------
# elimination helpers (tiny matrices; pivot threshold relative to the matrix)


def _row_echelon(M: np.ndarray):
    """Gaussian elimination with partial pivoting; returns (echelon, pivots)."""
    A = np.array(M, dtype=float)
    rows, cols = A.shape
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 0.0)
    pivots = []
    row = 0
    for col in range(cols):
        if row >= rows:
            break
        k = row + int(np.argmax(np.abs(A[row:, col])))
        if abs(A[k, col]) <= RANK_PIVOT_REL_TOL * scale:
            continue
        A[[row, k]] = A[[k, row]]
        A[row] = A[row] / A[row, col]
        for i in range(rows):
            if i != row and A[i, col] != 0.0:
                A[i] -= A[i, col] * A[row]
        pivots.append(col)
        row += 1
    return A, pivots


def matrix_rank(M) -> int:
    A = np.asarray(M, dtype=float)
    if A.size == 0:
        return 0
    return len(_row_echelon(A)[1])


def nullspace_basis(M) -> np.ndarray:
    """Basis of ker(M) from the reduced echelon form (free columns)."""
    A = np.asarray(M, dtype=float)
    rows, cols = A.shape
    R, pivots = _row_echelon(A)
    free = [c for c in range(cols) if c not in pivots]
    basis = np.zeros((cols, len(free)))
    for idx, fc in enumerate(free):
        basis[fc, idx] = 1.0
        for prow, pcol in enumerate(pivots):
            basis[pcol, idx] = -R[prow, fc]
    return basis


# ---------------------------------------------------------------------------
# plants


@dataclass(frozen=True)
class BifPlant:
    """Normal-form plant; construction validates the minimum-phase property
    (internal dynamics Hurwitz) and that Gamma is symmetric sign-definite."""

    r: int
    m: int
    R: tuple          # r matrices, each m x m
    S: np.ndarray     # m x n_eta
    Q_int: np.ndarray
    P_int: np.ndarray
    Gamma: np.ndarray
    d_r: object = None    # callable t -> m-vector
    d_eta: object = None  # callable t -> n_eta-vector

    def __post_init__(self):
        if len(self.R) != self.r:
            raise ValueError(f"need {self.r} chain coefficient matrices, got {len(self.R)}")
        if not ml.is_hurwitz(self.Q_int):
            raise ValueError("system not minimum phase (internal dynamics not Hurwitz)")
        G = self.Gamma
        if ml.frobenius(G - G.T) > 1e-10 * max(1.0, ml.frobenius(G)):
            raise ValueError("high-gain matrix must be symmetric")
        eigs = ml.sym_eig((G + G.T) / 2.0)
        if eigs[0] * eigs[-1] <= 0.0:
            raise ValueError("high-gain matrix must be sign definite")

    @property
    def n_eta(self) -> int:
        return self.Q_int.shape[0]

    @property
    def n_state(self) -> int:
        return self.r * self.m + self.n_eta

    def init_state(self) -> np.ndarray:
        return np.zeros(self.n_state)

    def split(self, x: np.ndarray):
        xi = x[: self.r * self.m].reshape(self.r, self.m)
        eta = x[self.r * self.m:]
        return xi, eta

    def output(self, x: np.ndarray) -> np.ndarray:
        return x[: self.m]

    def chain_states(self, x: np.ndarray) -> np.ndarray:
        return self.split(x)[0]

    def rhs(self, x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        xi, eta = self.split(x)
        dxi, deta = bif_plant_rhs(self, xi, eta, u, t)
        return np.concatenate([dxi.ravel(), deta])


def bif_plant_rhs(plant: BifPlant, xi: np.ndarray, eta: np.ndarray,
                  u: np.ndarray, t: float):
    """One evaluation of the normal-form dynamics; returns (dxi, deta)."""
    r, m = plant.r, plant.m
    xi = np.asarray(xi, dtype=float).reshape(r, m)
    eta = np.asarray(eta, dtype=float).reshape(plant.n_eta)
    u = np.asarray(u, dtype=float).reshape(m)

    dxi = np.empty_like(xi)
    dxi[:-1] = xi[1:]
    top = plant.Gamma @ u
    for j in range(r):
        top = top + plant.R[j] @ xi[j]
    if plant.n_eta:
        top = top + plant.S @ eta
    if plant.d_r is not None:
        top = top + np.asarray(plant.d_r(t), dtype=float).reshape(m)
    dxi[-1] = top

    if plant.n_eta:
        deta = plant.Q_int @ eta + plant.P_int @ xi[0]
        if plant.d_eta is not None:
            deta = deta + np.asarray(plant.d_eta(t), dtype=float).reshape(plant.n_eta)
    else:
        deta = np.zeros(0)
    return dxi, deta


class Example2Plant:
    """Nonlinear two-output relative-degree-3 tracking plant.

    Dynamics (xi_i in R^2, eta scalar):

        xi_1' = xi_2,  xi_2' = xi_3
        xi_3' = R1 xi_1 + R2 xi_2 + R3 xi_3 + f(d(t), T) + Gamma u
        T     = (xi_11^2 + exp(xi_11 - |xi_21|),  xi_12^3 - sin(xi_22),  eta)
        f     = (d_1 + T_1 + eta^3,  d_2 + T_2 - eta)
        d(t)  = (0.2 sin 5t + 0.2 cos 7t,  0.25 sin 9t + 0.2 cos 3t)

    The memory term (an exp(-t) convolution of ||xi_1||^2 tanh(||xi_3||^2))
    is realized exactly by the auxiliary state
        eta' = -eta + ||xi_1||^2 tanh(||xi_3||^2),  eta(0) = 0.
    The internal dynamics are bounded-input bounded-state stable because
    tanh bounds the drive.
    """

    r = 3
    m = 2
    n_state = 7

    R1 = np.array([[-1.0, 0.0], [0.0, 0.0]])
    R2 = np.array([[1.0, -1.0], [0.0, 0.0]])
    R3 = np.array([[1.0, 1.0], [0.0, -1.0]])
    Gamma = np.array([[2.0, 0.2], [0.2, 2.0]])

    @property
    def R(self):
        return (self.R1, self.R2, self.R3)

    @staticmethod
    def disturbance(t: float) -> np.ndarray:
        return np.array([0.2 * math.sin(5.0 * t) + 0.2 * math.cos(7.0 * t),
                         0.25 * math.sin(9.0 * t) + 0.2 * math.cos(3.0 * t)])

    def init_state(self) -> np.ndarray:
        return np.zeros(self.n_state)

    def split(self, x: np.ndarray):
        return x[:6].reshape(3, 2), x[6]

    def output(self, x: np.ndarray) -> np.ndarray:
        return x[:2]

    def chain_states(self, x: np.ndarray) -> np.ndarray:
        return x[:6].reshape(3, 2)

    def internal_state(self, x: np.ndarray) -> float:
        return float(x[6])

    def rhs(self, x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        xi, eta = self.split(x)
        return example2_plant_rhs(xi, eta, np.asarray(u, dtype=float), t)


def example2_plant_rhs(xi: np.ndarray, eta: float, u: np.ndarray, t: float) -> np.ndarray:
    """Derivative of the packed state (xi_1, xi_2, xi_3, eta) in R^7."""
    p = Example2Plant
    xi = np.asarray(xi, dtype=float).reshape(3, 2)
    d = p.disturbance(t)
    op1 = xi[0, 0] ** 2 + math.exp(xi[0, 0] - abs(xi[1, 0]))
    op2 = xi[0, 1] ** 3 - math.sin(xi[1, 1])
    f = np.array([d[0] + op1 + eta ** 3, d[1] + op2 - eta])
    top = p.R1 @ xi[0] + p.R2 @ xi[1] + p.R3 @ xi[2] + f + p.Gamma @ u
    deta = -eta + float(xi[0] @ xi[0]) * math.tanh(float(xi[2] @ xi[2]))
    return np.concatenate([xi[1], xi[2], top, [deta]])


def linear_to_bif(A, B, C, expected_r: int | None = None, d=None) -> BifPlant:
    """Transform a minimum-phase linear triple (A, B, C) into normal form.

    The relative degree r is detected as the least k with C A^(k-1) B != 0
    (tolerance 1e-10 ||C|| ||A||^j ||B||); the high-gain matrix
    Gamma = C A^(r-1) B must be invertible.  The coordinate change is
    U = [CC; N] with CC the stacked observability-like rows C A^j, V a
    nullspace basis of CC, and N = V^+ (I - BB (CC BB)^{-1} CC).
    The disturbance hook only covers the case C A^k d = 0 for k < r-1, where
    (d_r, d_eta) = (C A^(r-1) d, N d).
    """
    A = ml._square(A, "A")
    B = ml.as_matrix(B, "B")
    C = ml.as_matrix(C, "C")
    n = A.shape[0]
    m = C.shape[0]
    if B.shape != (n, m):
        raise ValueError("input matrix must be n x m with m outputs")
    if matrix_rank(C) != m or matrix_rank(B) != m:
        raise ValueError("input and output matrices must have full rank m")

    norm_A = ml.spectral_norm(A)
    norm_B = ml.spectral_norm(B)
    norm_C = ml.spectral_norm(C)

    r = None
    CAj = C.copy()
    markov_scale = norm_C * norm_B
    for k in range(1, n + 1):
        block = CAj @ B  # = C A^(k-1) B
        if ml.spectral_norm(block) > RANK_PIVOT_REL_TOL * markov_scale:
            r = k
            Gamma = block
            break
        CAj = CAj @ A
        markov_scale *= norm_A
    if r is None:
        raise ValueError("no well-defined relative degree")
    if expected_r is not None and r != expected_r:
        raise ValueError("no well-defined relative degree")
    if matrix_rank(Gamma) != m:
        raise ValueError("high-gain matrix is singular")
    if n < r * m:
        raise ValueError("state dimension too small for the detected relative degree")

    powers = [np.eye(n)]
    for _ in range(r):
        powers.append(A @ powers[-1])
    BB = np.hstack([powers[j] @ B for j in range(r)])
    CC = np.vstack([C @ powers[j] for j in range(r)])

    V = nullspace_basis(CC)
    if V.shape[1] != n - r * m:
        raise ValueError("coordinate transformation is singular")
    CCBB = CC @ BB
    try:
        inner = np.linalg.solve(CCBB, CC)
    except np.linalg.LinAlgError:
        raise ValueError("coordinate transformation is singular") from None
    if V.shape[1]:
        V_pinv = np.linalg.solve(V.T @ V, V.T)
        N = V_pinv @ (np.eye(n) - BB @ inner)
    else:
        N = np.zeros((0, n))
    U = np.vstack([CC, N])
    if matrix_rank(U) != n:
        raise ValueError("coordinate transformation is singular")

    CAr = C @ powers[r]
    blocks = CAr @ np.linalg.inv(U)
    R = tuple(blocks[:, j * m:(j + 1) * m].copy() for j in range(r))
    S = blocks[:, r * m:].copy()
    Gamma_inv = np.linalg.inv(Gamma)
    P_int = N @ powers[r] @ B @ Gamma_inv
    Q_int = N @ A @ V

    d_r = d_eta = None
    if d is not None:
        CA_top = C @ powers[r - 1]
        d_r = lambda t, _M=CA_top, _d=d: _M @ np.asarray(_d(t), dtype=float)
        d_eta = (lambda t, _N=N, _d=d: _N @ np.asarray(_d(t), dtype=float)) if N.shape[0] else None

    if ml.frobenius(Gamma - Gamma.T) <= 1e-10 * max(1.0, ml.frobenius(Gamma)):
        Gamma = (Gamma + Gamma.T) / 2.0
    return BifPlant(r=r, m=m, R=R, S=S, Q_int=Q_int, P_int=P_int,
                    Gamma=Gamma, d_r=d_r, d_eta=d_eta)


# ---------------------------------------------------------------------------
# reference signals


@dataclass(frozen=True)
class RefComponent:
    """One smooth scalar signal: gaussian-bump(t0), sine(omega), or constant."""

    kind: str
    t0: float = 0.0
    omega: float = 1.0
    value: float = 0.0

    def derivs(self, t: float, order: int) -> np.ndarray:
        out = np.zeros(order + 1)
        if self.kind == "gaussian-bump":
            # g = exp(-x^2): g^(k) = (-1)^k H_k(x) g with Hermite recursion
            # H_{k+1} = 2 x H_k - 2 k H_{k-1}
            x = t - self.t0
            g = math.exp(-x * x)
            h_prev, h_cur = 0.0, 1.0
            sign = 1.0
            for k in range(order + 1):
                out[k] = sign * h_cur * g
                h_prev, h_cur = h_cur, 2.0 * x * h_cur - 2.0 * k * h_prev
                sign = -sign
            return out
        if self.kind == "sine":
            for k in range(order + 1):
                out[k] = self.omega ** k * math.sin(self.omega * t + k * math.pi / 2.0)
            return out
        if self.kind == "constant":
            out[0] = self.value
            return out
        raise ValueError(f"unknown signal kind {self.kind!r}")


@dataclass(frozen=True)
class ReferenceSpec:
    """Per-output analytic signal with derivatives of every requested order."""

    components: tuple

    @property
    def m(self) -> int:
        return len(self.components)

    def __call__(self, t: float) -> np.ndarray:
        return np.array([c.derivs(t, 0)[0] for c in self.components])


def reference_derivs(spec: ReferenceSpec, t: float, order: int) -> np.ndarray:
    """Stacked derivatives, shape (order+1, m); row k is the k-th derivative."""
    if order < 0:
        raise ValueError("derivative order must be nonnegative")
    cols = [c.derivs(t, order) for c in spec.components]
    return np.stack(cols, axis=1)


def make_reference(components) -> ReferenceSpec:
    """Build a ReferenceSpec from descriptor dicts."""
    parts = []
    for c in components:
        kind = c.get("kind")
        if kind == "gaussian-bump":
            parts.append(RefComponent(kind=kind, t0=float(c.get("t0", 0.0))))
        elif kind == "sine":
            parts.append(RefComponent(kind=kind, omega=float(c.get("omega", 1.0))))
        elif kind == "constant":
            parts.append(RefComponent(kind=kind, value=float(c.get("value", 0.0))))
        else:
            raise ValueError(f"unknown signal kind {kind!r}")
    return ReferenceSpec(components=tuple(parts))
