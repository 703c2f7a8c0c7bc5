"""Executable form of the cascade's error analysis.

Two layers:

* ``kron_identities`` builds the Kronecker-lifted certificates
  (A_hat = A (x) I_m etc.) and verifies the algebraic identities they must
  satisfy:

      A_hat' P_hat + P_hat A_hat + Q_hat = 0
      P_hat P_bar = [p_tilde I_m, 0, ..., 0]'
      A_hat' P_hat1 + P_hat1 A_hat = -Q_hat1,   Q_hat1 SPD

  where P_hat1 conjugates P_hat by I_r (x) (Gamma Gamma_tilde^-1)^(-1/2).

* ``error_coordinates`` replays the stage-error coordinate changes along a
  stored trajectory (white box: the plant's integrator-chain states provide
  the output derivatives) and measures the quantities the feasibility
  argument bounds: the transformed states w_{i,j}, the quadratic form
  V = w' script_P w, and the empirical funnel margins
  kappa_i = min_t (1/phi - ||x_i||).

Derivative terms inside the w_{1,*} substitution are evaluated by central
finite differences on the sample grid; they are diagnostic-grade
(~1e-4 relative), not part of any control path.
"""

from dataclasses import dataclass

import numpy as np

from . import matrixlab as ml
from .paramdesign import DesignParams
from .simloop import SimResult


@dataclass(frozen=True)
class KroneckerKit:
    """Kronecker-lifted design certificates (None fields need Gamma)."""

    A_hat: np.ndarray
    P_hat: np.ndarray
    Q_hat: np.ndarray
    P_bar: np.ndarray          # (r m) x m
    p_tilde: float
    ratio: np.ndarray | None   # Gamma Gamma_tilde^-1
    P_hat1: np.ndarray | None
    Q_hat1: np.ndarray | None
    script_P: np.ndarray | None


def _sym_inv_sqrt(W: np.ndarray) -> np.ndarray:
    w, V = ml.sym_eig(W, with_vectors=True)
    if w[0] <= 0.0:
        raise ValueError("gain ratio must be symmetric positive definite; "
                         "lifted certificate construction refused")
    return V @ np.diag(1.0 / np.sqrt(w)) @ V.T


def build_kronecker_kit(params: DesignParams, Gamma=None) -> KroneckerKit:
    r, m = params.r, params.m
    eye_m = np.eye(m)
    A_hat = ml.kron(params.A, eye_m)
    P_hat = ml.kron(params.P, eye_m)
    Q_hat = ml.kron(params.Q, eye_m)
    P_bar = ml.kron(params.p.reshape(r, 1), eye_m)

    ratio = P_hat1 = Q_hat1 = script_P = None
    if Gamma is not None:
        Gamma = ml.as_matrix(Gamma, "Gamma")
        ratio = Gamma @ np.linalg.inv(params.Gamma_tilde)
        if ml.frobenius(ratio - ratio.T) > 1e-10 * max(1.0, ml.frobenius(ratio)):
            raise ValueError("gain ratio must be symmetric positive definite; "
                             "lifted certificate construction refused")
        ratio = (ratio + ratio.T) / 2.0
        conj = ml.kron(np.eye(r), _sym_inv_sqrt(ratio))
        P_hat1 = conj @ P_hat @ conj
        Q_hat1 = conj @ Q_hat @ conj
        size = r * m * (r - 1)
        script_P = np.zeros((size, size))
        script_P[: r * m, : r * m] = P_hat1
        for i in range(1, r - 1):
            script_P[i * r * m:(i + 1) * r * m, i * r * m:(i + 1) * r * m] = P_hat
    return KroneckerKit(A_hat=A_hat, P_hat=P_hat, Q_hat=Q_hat, P_bar=P_bar,
                        p_tilde=params.p_tilde, ratio=ratio, P_hat1=P_hat1,
                        Q_hat1=Q_hat1, script_P=script_P)


def kron_identities(params: DesignParams, Gamma=None) -> dict:
    """Residual report for the lifted certificates; all should be <= 1e-10."""
    kit = build_kronecker_kit(params, Gamma)
    r, m = params.r, params.m
    res_lyap = ml.frobenius(kit.A_hat.T @ kit.P_hat + kit.P_hat @ kit.A_hat + kit.Q_hat)
    target = np.zeros((r * m, m))
    target[:m, :m] = kit.p_tilde * np.eye(m)
    res_structure = ml.frobenius(kit.P_hat @ kit.P_bar - target)
    report = {
        "residual_lifted_lyapunov": float(res_lyap),
        "residual_gain_structure": float(res_structure),
    }
    if kit.P_hat1 is not None:
        res1 = ml.frobenius(kit.A_hat.T @ kit.P_hat1 + kit.P_hat1 @ kit.A_hat + kit.Q_hat1)
        report["residual_conjugated_lyapunov"] = float(res1)
        report["Q_hat1_min_eig"] = float(ml.sym_eig(kit.Q_hat1)[0])
        report["Q_hat1_spd"] = bool(report["Q_hat1_min_eig"] > 0.0)
    return report


def _series_derivative(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Central finite differences on a (possibly vector-valued) series."""
    out = np.empty_like(f)
    dt = (t[2:] - t[:-2]).reshape((-1,) + (1,) * (f.ndim - 1))
    out[1:-1] = (f[2:] - f[:-2]) / dt
    out[0] = (f[1] - f[0]) / (t[1] - t[0])
    out[-1] = (f[-1] - f[-2]) / (t[-1] - t[-2])
    return out


def _series_derivs(t, f, orders: int):
    """f, f', ..., f^(orders) as a list of arrays."""
    out = [np.asarray(f, dtype=float)]
    for _ in range(orders):
        out.append(_series_derivative(t, out[-1]))
    return out


@dataclass
class ErrorCoordinates:
    """Transformed error time series along a stored run."""

    t: np.ndarray
    w: np.ndarray            # (n, r-1, r, m): w_{i,j}
    x: np.ndarray            # (n, r-1, m): x_1 = w_bar, x_i = w_{i,1}
    V: np.ndarray | None     # quadratic form w' script_P w (needs Gamma)
    gains: np.ndarray        # (n, r-1)
    margin_series: np.ndarray  # (n, r-1): boundary - ||x_i|| per sample
    kappa_hat: np.ndarray    # empirical margins, one per stage
    identity_residual: float  # max |y - v_tilde - z|
    script_P: np.ndarray | None


def error_coordinates(sim: SimResult, params: DesignParams, Gamma=None,
                      R=None) -> ErrorCoordinates:
    """Replay the stage-error coordinate changes along a stored run.

    Requires the integrator-chain states xi (so y^(j) = xi_{j+1} is
    available white-box); the controller path never uses them.  ``R`` is
    the plant's chain coefficient tuple (zero for pure signal runs).
    """
    if "xi" not in sim.aux:
        raise ValueError("white-box diagnostics require integrator-chain states")
    xi = np.asarray(sim.aux["xi"], dtype=float)   # (n, r, m)
    r, m = params.r, params.m
    n = xi.shape[0]
    t = sim.column("t")

    if Gamma is None:
        ratio = np.eye(m)
    else:
        ratio = ml.as_matrix(Gamma, "Gamma") @ np.linalg.inv(params.Gamma_tilde)
        ratio = (ratio + ratio.T) / 2.0
    G = np.eye(m) - ratio
    if R is None:
        R = tuple(np.zeros((m, m)) for _ in range(r))

    def zser(i, j):
        cols = [sim.columns.index(f"z_{i}_{j}_{k}") for k in range(1, m + 1)]
        return sim.data[:, cols]

    gains = np.stack([sim.column(f"h_{i}") for i in range(1, r)], axis=1)
    y = np.stack([sim.column(f"y_{k}") for k in range(1, m + 1)], axis=1)
    z = np.stack([sim.column(f"z_{k}") for k in range(1, m + 1)], axis=1)

    # stage differences v_{i,j} = z_{i-1,j} - z_{i,j}, i >= 2
    v = np.zeros((n, r - 1 + 1, r, m))  # index i in 1..r-1 at v[:, i]
    for i in range(2, r):
        for j in range(1, r + 1):
            v[:, i, j - 1] = zser(i - 1, j) - zser(i, j)

    # first-stage errors against the true output derivatives
    e1 = np.zeros((n, r, m))
    for j in range(1, r):
        e1[:, j - 1] = xi[:, j - 1] - zser(1, j)
    e1[:, r - 1] = xi[:, r - 1] - zser(1, r) @ ratio.T

    v[:, 1, 0] = e1[:, 0]
    vtilde = v[:, 1:, 0].sum(axis=1)          # sum over i of v_{i,1}
    identity_residual = float(np.max(np.abs(y - vtilde - z)))

    vtilde_derivs = _series_derivs(t, vtilde, max(r - 2, 0))
    for j in range(2, r + 1):
        acc = e1[:, j - 1].copy()
        for k in range(1, j):
            acc -= vtilde_derivs[k - 1] @ R[r - j + k].T  # R_{r-j+k+1}
        v[:, 1, j - 1] = acc

    # w_{i,j}: identity for i >= 2; corrected sums for the first stage
    w = v[:, 1:].copy()                       # (n, r-1, r, m)
    h1 = gains[:, 0]
    v11 = v[:, 1, 0]
    scalar_terms = []                         # (a_{r-k-1} + p_{r-k-1} h1) v_{1,1}
    for k in range(r - 1):
        idx = r - k - 1
        coeff = params.a[idx - 1] + params.p[idx - 1] * h1
        scalar_terms.append(coeff[:, None] * v11)
    for jj in range(1, r):
        target_j = r - jj
        acc = v[:, 1, target_j - 1].copy()
        chain = np.zeros((n, m))
        for kk in range(2, r):
            derivs = _series_derivs(t, v[:, kk, 0], max(r - 1 - jj, 0))
            chain += derivs[r - 1 - jj]
        acc += chain @ G.T
        corr = np.zeros((n, m))
        for kk in range(jj, r - 1):
            term = scalar_terms[kk]
            dterm = _series_derivs(t, term, kk - jj)[kk - jj]
            corr += dterm
        acc -= corr @ G.T
        w[:, 0, target_j - 1] = acc

    wtilde = w[:, 1:, 0].sum(axis=1) if r > 2 else np.zeros((n, m))
    wbar = w[:, 0, 0] - wtilde @ G.T

    x = np.zeros((n, r - 1, m))
    x[:, 0] = wbar
    for i in range(2, r):
        x[:, i - 1] = w[:, i - 1, 0]

    boundary1 = np.array([params.phi1.boundary(float(tt)) for tt in t])
    boundary = np.array([params.phi.boundary(float(tt)) for tt in t])
    margin_series = np.empty((n, r - 1))
    margin_series[:, 0] = boundary1 - np.linalg.norm(x[:, 0], axis=1)
    for i in range(1, r - 1):
        margin_series[:, i] = boundary - np.linalg.norm(x[:, i], axis=1)
    kappa = np.min(margin_series, axis=0)

    V = None
    script_P = None
    if Gamma is not None:
        kit = build_kronecker_kit(params, Gamma)
        script_P = kit.script_P
        flat = w.reshape(n, -1)
        V = np.einsum("ni,ij,nj->n", flat, script_P, flat)

    return ErrorCoordinates(t=t, w=w, x=x, V=V, gains=gains,
                            margin_series=margin_series, kappa_hat=kappa,
                            identity_residual=identity_residual, script_P=script_P)


def margin_report(coords: ErrorCoordinates, params: DesignParams) -> dict:
    """Summarize empirical margins and boundedness of the transformed states.

    The decay envelope of V depends on constants that are not observable
    from run data, so V is reported for boundedness only.
    """
    r = params.r
    sup_w = [float(np.max(np.linalg.norm(coords.w[:, i], axis=2)))
             for i in range(r - 1)]
    report = {
        "kappa_hat": [float(k) for k in coords.kappa_hat],
        "all_margins_positive": bool(np.all(coords.kappa_hat > 0.0)),
        "sup_gains": [float(g) for g in np.max(coords.gains, axis=0)],
        "sup_w_norms": sup_w,
        "identity_residual": coords.identity_residual,
    }
    if coords.V is not None:
        report["sup_V"] = float(np.max(coords.V))
        w_min = float(ml.sym_eig(coords.script_P)[0])
        flat = coords.w.reshape(coords.w.shape[0], -1)
        lower = w_min * np.sum(flat * flat, axis=1)
        report["quadratic_sandwich_ok"] = bool(np.all(coords.V >= lower - 1e-12))
    return report
