"""Small dense real linear algebra used throughout the package.

Everything here operates on plain 2-D ``numpy.ndarray`` matrices (row-major,
float64).  The matrices in this problem domain are tiny (at most a few dozen
rows), so the solvers favour simple, well-conditioned formulations over
asymptotic efficiency:

* Lyapunov equations are solved by Kronecker vectorization and a single
  partial-pivot elimination.
* Only *symmetric* eigenproblems are solved numerically (cyclic Jacobi);
  stability of general matrices is decided by the Routh-Hurwitz criterion on
  the characteristic polynomial, so no general eigensolver is ever needed.
"""

from dataclasses import dataclass

import numpy as np

LYAPUNOV_RESIDUAL_TOL = 1e-10
SYMMETRY_TOL = 1e-12
ROUTH_PIVOT_TOL = 1e-12


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array; scalars become 1x1."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {A.shape}")
    if A.size and not np.all(np.isfinite(A)):
        raise ValueError(f"{name} must have finite entries")
    return A


def _square(M, name: str = "matrix") -> np.ndarray:
    A = as_matrix(M, name)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    return A


def frobenius(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=float)))


def kron(K, L) -> np.ndarray:
    """Kronecker product: block (i, j) of the result equals K[i, j] * L."""
    return np.kron(as_matrix(K, "K"), as_matrix(L, "L"))


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve A'P + PA + Q = 0 for symmetric P.

    Vectorizes to (I (x) A' + A' (x) I) vec(P) = -vec(Q) (column-major vec)
    and solves with partial-pivot elimination, then symmetrizes the result.
    Sizes here are r <= ~8, so the O(n^6) cost is irrelevant.
    """
    A = _square(A, "A")
    Q = _square(Q, "Q")
    n = A.shape[0]
    if Q.shape[0] != n:
        raise ValueError(f"A and Q must have matching sizes, got {n} and {Q.shape[0]}")
    if frobenius(Q - Q.T) > SYMMETRY_TOL * max(1.0, frobenius(Q)):
        raise ValueError("Q must be symmetric")

    eye = np.eye(n)
    system = np.kron(eye, A.T) + np.kron(A.T, eye)
    rhs = -Q.flatten(order="F")
    try:
        vec_p = np.linalg.solve(system, rhs)
        P = vec_p.reshape((n, n), order="F")
        P = (P + P.T) / 2.0
        # one or two rounds of iterative refinement keep the residual near
        # machine level even for large companion coefficients
        for _ in range(2):
            res = A.T @ P + P @ A + Q
            if frobenius(res) <= 1e-13 * (1.0 + frobenius(Q)):
                break
            corr = np.linalg.solve(system, -res.flatten(order="F"))
            P = P + corr.reshape((n, n), order="F")
            P = (P + P.T) / 2.0
    except np.linalg.LinAlgError:
        raise ValueError("Lyapunov equation not uniquely solvable") from None

    # singularity gate: a genuinely ill-posed pairing (A and -A sharing
    # eigenvalues) leaves a residual of the order of Q itself, while a
    # well-solved system sits at rounding level, which scales with |A||P|
    residual = frobenius(A.T @ P + P @ A + Q)
    if residual > LYAPUNOV_RESIDUAL_TOL * (1.0 + frobenius(Q)
                                           + 2.0 * frobenius(A) * frobenius(P)):
        raise ValueError("Lyapunov equation not uniquely solvable")
    return P


def sym_eig(M, with_vectors: bool = False):
    """Eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi rotations.

    With ``with_vectors=True`` also returns the orthogonal eigenvector matrix
    (columns ordered like the eigenvalues).  Intended for the <= ~20x20
    matrices that occur here; each sweep annihilates all off-diagonal pairs.
    """
    A = _square(M, "matrix")
    n = A.shape[0]
    scale = frobenius(A)
    if frobenius(A - A.T) > SYMMETRY_TOL * max(1.0, scale):
        raise ValueError("symmetric eigensolver requires symmetric matrix")
    if n == 0:
        empty = np.zeros(0)
        return (empty, np.zeros((0, 0))) if with_vectors else empty

    A = (A + A.T) / 2.0
    V = np.eye(n)
    for _ in range(60):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= 1e-15 * max(1.0, scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * max(1.0, scale):
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * A[:, p] - s * A[:, q]
                rot_q = s * A[:, p] + c * A[:, q]
                A[:, p], A[:, q] = rot_p, rot_q
                rot_p = c * A[p, :] - s * A[q, :]
                rot_q = s * A[p, :] + c * A[q, :]
                A[p, :], A[q, :] = rot_p, rot_q
                A[p, q] = A[q, p] = 0.0
                rot_p = c * V[:, p] - s * V[:, q]
                rot_q = s * V[:, p] + c * V[:, q]
                V[:, p], V[:, q] = rot_p, rot_q

    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    if with_vectors:
        return w[order], V[:, order]
    return w[order]


def spectral_norm(M) -> float:
    """Largest singular value, via the symmetric eigenvalues of M'M."""
    A = as_matrix(M, "matrix")
    if A.size == 0:
        return 0.0
    gram = A.T @ A if A.shape[0] >= A.shape[1] else A @ A.T
    gram = (gram + gram.T) / 2.0
    w = sym_eig(gram)
    return float(np.sqrt(max(w[-1], 0.0)))


def is_spd(M, tol: float = 0.0) -> bool:
    """Symmetric positive definite test via the symmetric eigensolver."""
    A = _square(M, "matrix")
    if frobenius(A - A.T) > SYMMETRY_TOL * max(1.0, frobenius(A)):
        return False
    w = sym_eig(A)
    return bool(w.size == 0 or w[0] > tol)


def characteristic_polynomial(M) -> np.ndarray:
    """Monic characteristic polynomial coefficients by Faddeev-LeVerrier.

    Returns c with det(sI - M) = s^n + c[0] s^(n-1) + ... + c[n-1].
    """
    A = _square(M, "matrix")
    n = A.shape[0]
    coeffs = np.zeros(n)
    Mk = np.zeros_like(A)
    eye = np.eye(n)
    ck = 1.0
    for k in range(1, n + 1):
        Mk = A @ (Mk + ck * eye)
        ck = -np.trace(Mk) / k
        coeffs[k - 1] = ck
    return coeffs


@dataclass(frozen=True)
class HurwitzResult:
    """Stability verdict; ``marginal`` flags a near-zero Routh pivot."""

    stable: bool
    marginal: bool = False

    def __bool__(self) -> bool:
        return self.stable


def routh_hurwitz(coeffs) -> HurwitzResult:
    """Routh-Hurwitz criterion for a monic polynomial s^n + c[0]s^(n-1) + ...

    All first-column Routh entries must be strictly positive.  Any pivot with
    magnitude below ``ROUTH_PIVOT_TOL`` is a boundary case: reported unstable
    with the marginal flag set.
    """
    c = np.concatenate(([1.0], np.asarray(coeffs, dtype=float)))
    n = c.size - 1
    if n == 0:
        return HurwitzResult(stable=True)

    width = (n // 2) + 1
    rows = np.zeros((n + 1, width + 1))
    rows[0, : len(c[0::2])] = c[0::2]
    rows[1, : len(c[1::2])] = c[1::2]
    for k in range(2, n + 1):
        pivot = rows[k - 1, 0]
        if abs(pivot) < ROUTH_PIVOT_TOL:
            return HurwitzResult(stable=False, marginal=True)
        rows[k, :width] = (
            pivot * rows[k - 2, 1 : width + 1] - rows[k - 2, 0] * rows[k - 1, 1 : width + 1]
        ) / pivot

    first_col = rows[: n + 1, 0]
    if np.any(np.abs(first_col) < ROUTH_PIVOT_TOL):
        return HurwitzResult(stable=False, marginal=True)
    return HurwitzResult(stable=bool(np.all(first_col > 0.0)))


def is_hurwitz(M) -> HurwitzResult:
    """True iff every eigenvalue of M has strictly negative real part.

    Decided via the characteristic polynomial and the Routh-Hurwitz table;
    no general eigensolve.  Empty matrices (no internal dynamics) are
    vacuously Hurwitz.
    """
    A = _square(M, "matrix")
    if A.shape[0] == 0:
        return HurwitzResult(stable=True)
    return routh_hurwitz(characteristic_polynomial(A))
