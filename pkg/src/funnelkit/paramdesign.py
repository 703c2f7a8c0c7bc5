"""Construction and validation of the pre-compensator design parameters.

A feasible parameter set consists of

* gains ``a`` making the companion matrix ``A`` Hurwitz, the Lyapunov
  certificate ``P`` (A'P + PA + Q = 0, Q SPD), and the derived vector
  ``p = (1, -P4^{-1} P2')`` with Schur complement ``p_tilde > 0``;
* a funnel pair with ``phi = rho * phi1`` for some rho > 1;
* a symmetric positive definite surrogate gain ``Gamma_tilde`` such that,
  when the true high-gain matrix ``Gamma`` is known, ``Gamma Gamma_tilde^-1``
  is symmetric positive definite and the mismatch ``G = I - Gamma
  Gamma_tilde^-1`` is small enough:
  ||G|| < min{(rho-1)/(r-2), rho/(4 rho^2 (rho+1)^(r-2) - 1)}.

Everything can be generated from a single pole location s0 > 0 via the
polynomial (s + s0)^r together with Q = I.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import matrixlab as ml
from .funnels import FunnelSpec, make_funnel

RATIO_CHECK_TOL = 1e-12
P_IDENTITY_TOL = 1e-10
BOUNDARY_BAND = 1e-12


def hurwitz_coefficients(r: int, s0: float) -> np.ndarray:
    """Coefficients a with (s + s0)^r = s^r + sum_i a_i s^(r-i).

    All roots sit at -s0, so a_i = C(r, i) s0^i and the companion matrix is
    Hurwitz by construction.
    """
    if r < 1:
        raise ValueError("relative degree must be at least 1")
    if s0 <= 0.0:
        raise ValueError("root must lie in the open left half-plane")
    return np.array([math.comb(r, i) * s0 ** i for i in range(1, r + 1)])


def companion_matrix(a) -> np.ndarray:
    """Companion form with first column -a and ones on the superdiagonal.

    Its characteristic polynomial is s^r + a_1 s^(r-1) + ... + a_r.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    r = a.size
    A = np.zeros((r, r))
    A[:, 0] = -a
    for i in range(r - 1):
        A[i, i + 1] = 1.0
    return A


def derive_p(P, r: int) -> tuple[np.ndarray, float]:
    """Derived gain vector p and Schur complement p_tilde from SPD P.

    With the block split P = [[P1, P2], [P2', P4]] (P1 scalar),
    p = (1, -P4^{-1} P2') and p_tilde = P1 - P2 P4^{-1} P2' > 0; the
    equivalent identity P p = (p_tilde, 0, ..., 0)' is verified as a guard
    against an inconsistent split.
    """
    P = np.asarray(P, dtype=float)
    if P.shape != (r, r):
        raise ValueError(f"P must be {r}x{r}, got {P.shape}")
    if not ml.is_spd(P):
        raise ValueError("Lyapunov solution must be positive definite")
    if r == 1:
        return np.array([1.0]), float(P[0, 0])

    P1 = P[0, 0]
    P2 = P[0:1, 1:]
    P4 = P[1:, 1:]
    tail = -np.linalg.solve(P4, P2.T).ravel()
    p = np.concatenate(([1.0], tail))
    p_tilde = float(P1 - (P2 @ np.linalg.solve(P4, P2.T))[0, 0])

    target = np.zeros(r)
    target[0] = p_tilde
    residual = np.linalg.norm(P @ p - target)
    if residual > P_IDENTITY_TOL * max(1.0, float(np.linalg.norm(P))):
        raise ValueError("derived gain vector inconsistent with its Lyapunov matrix")
    return p, p_tilde


def gain_mismatch_bound(rho: float, r: int) -> float:
    """Admissible mismatch ||I - Gamma Gamma_tilde^-1||:
    min{(rho-1)/(r-2), rho/(4 rho^2 (rho+1)^(r-2) - 1)}; the first branch is
    +inf for r = 2.
    """
    if rho <= 1.0:
        raise ValueError("funnel scaling requires rho > 1")
    if r < 2:
        raise ValueError("the mismatch bound is defined for relative degree >= 2")
    first = math.inf if r == 2 else (rho - 1.0) / (r - 2)
    second = rho / (4.0 * rho ** 2 * (rho + 1.0) ** (r - 2) - 1.0)
    return min(first, second)


@dataclass(frozen=True)
class DesignParams:
    """Complete, validated pre-compensator parameter tuple."""

    r: int
    m: int
    a: np.ndarray
    p: np.ndarray
    A: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    p_tilde: float
    rho: float
    Gamma_tilde: np.ndarray
    phi: FunnelSpec
    phi1: FunnelSpec


@dataclass
class ConditionCheck:
    name: str
    status: str  # "pass" | "fail" | "boundary" | "skipped"
    measured: float | None
    required: str
    message: str

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "measured": self.measured,
                "required": self.required, "message": self.message}


@dataclass
class ValidationReport:
    checks: list[ConditionCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def add(self, *args, **kwargs) -> None:
        self.checks.append(ConditionCheck(*args, **kwargs))

    def as_dict(self) -> dict:
        return {"ok": self.ok, "checks": [c.as_dict() for c in self.checks]}

    def render_text(self) -> str:
        lines = []
        for c in self.checks:
            measured = "" if c.measured is None else f" measured={c.measured:.6g}"
            lines.append(f"[{c.status:>8}] {c.name}:{measured} required {c.required}; {c.message}")
        lines.append(f"overall: {'ok' if self.ok else 'FAILED'}")
        return "\n".join(lines)


def _ratio_samples(t1: float = 10.0, n: int = 50) -> np.ndarray:
    return np.linspace(0.0, t1, n)


def validate_design(params: DesignParams, Gamma=None) -> ValidationReport:
    """Check every feasibility condition; findings go in the report.

    Layout of the checks:

    * ``companion_hurwitz``: a > 0, A Hurwitz, Lyapunov residual small,
      p consistent with P (p_1 = 1, P p = (p_tilde, 0, ...)').
    * ``funnel_ratio``: phi(t) = rho * phi1(t) with rho > 1.
    * ``gain_ratio_spd`` (only when Gamma given): Gamma Gamma_tilde^-1
      symmetric positive definite.
    * ``gain_mismatch`` (only when Gamma given): ||G|| strictly below the
      bound.  Equality within 1e-12 is reported as "boundary" -- a pass with
      a warning, since the strict inequality has no numerical meaning there.
    """
    report = ValidationReport()
    r = params.r

    # companion matrix, Lyapunov certificate, derived gains
    if np.any(params.a <= 0.0):
        report.add("companion_hurwitz", "fail", float(np.min(params.a)),
                   "a_i > 0", "companion gains must be positive")
    else:
        hur = ml.is_hurwitz(params.A)
        lyap_res = ml.frobenius(params.A.T @ params.P + params.P @ params.A + params.Q)
        lyap_scale = (1.0 + ml.frobenius(params.Q)
                      + 2.0 * ml.frobenius(params.A) * ml.frobenius(params.P))
        lyap_ok = lyap_res <= ml.LYAPUNOV_RESIDUAL_TOL * lyap_scale
        target = np.zeros(r)
        target[0] = params.p_tilde
        p_res = float(np.linalg.norm(params.P @ params.p - target))
        p_ok = (params.p[0] == 1.0) and params.p_tilde > 0.0 and \
            p_res <= P_IDENTITY_TOL * max(1.0, ml.frobenius(params.P))
        if hur.stable and lyap_ok and p_ok:
            report.add("companion_hurwitz", "pass", lyap_res,
                       "A Hurwitz, Lyapunov residual at rounding level, p consistent", "ok")
        else:
            why = []
            if not hur.stable:
                why.append("companion matrix is not Hurwitz"
                           + (" (marginal pivot)" if hur.marginal else ""))
            if not lyap_ok:
                why.append(f"Lyapunov residual {lyap_res:.3g}")
            if not p_ok:
                why.append(f"gain vector inconsistent (residual {p_res:.3g})")
            report.add("companion_hurwitz", "fail", lyap_res,
                       "A Hurwitz, Lyapunov residual at rounding level, p consistent", "; ".join(why))

    # funnel scaling phi = rho * phi1
    if params.rho <= 1.0:
        report.add("funnel_ratio", "fail", params.rho, "rho > 1",
                   "funnel scaling requires rho > 1")
    else:
        worst = 0.0
        for t in _ratio_samples():
            v1 = params.phi1.value(float(t))
            v = params.phi.value(float(t))
            worst = max(worst, abs(v - params.rho * v1) / max(abs(v), 1e-300))
        if worst <= RATIO_CHECK_TOL:
            report.add("funnel_ratio", "pass", worst,
                       f"phi = rho*phi1 within {RATIO_CHECK_TOL:g}", "ok")
        else:
            report.add("funnel_ratio", "fail", worst,
                       f"phi = rho*phi1 within {RATIO_CHECK_TOL:g}",
                       "funnel pair does not scale by rho")

    if Gamma is None:
        report.add("gain_ratio_spd", "skipped", None,
                   "Gamma Gamma_tilde^-1 SPD", "true high-gain matrix not supplied")
        report.add("gain_mismatch", "skipped", None,
                   "||G|| < mismatch bound", "true high-gain matrix not supplied")
        return report

    Gamma = ml.as_matrix(Gamma, "Gamma")
    m = params.m
    if Gamma.shape != (m, m):
        report.add("gain_ratio_spd", "fail", None, f"{m}x{m}",
                   f"high-gain matrix has shape {Gamma.shape}")
        return report

    ratio = Gamma @ np.linalg.inv(params.Gamma_tilde)
    sym_defect = ml.frobenius(ratio - ratio.T)
    if sym_defect > 1e-10 * max(1.0, ml.frobenius(ratio)):
        report.add("gain_ratio_spd", "fail", sym_defect,
                   "symmetric positive definite",
                   "Gamma Gamma_tilde^-1 is not symmetric")
        report.add("gain_mismatch", "skipped", None,
                   "||G|| < mismatch bound", "gain ratio not symmetric")
        return report
    ratio = (ratio + ratio.T) / 2.0
    min_eig = float(ml.sym_eig(ratio)[0])
    if min_eig <= 0.0:
        report.add("gain_ratio_spd", "fail", min_eig,
                   "symmetric positive definite",
                   "Gamma Gamma_tilde^-1 is not positive definite")
        report.add("gain_mismatch", "skipped", None,
                   "||G|| < mismatch bound", "gain ratio not positive definite")
        return report
    report.add("gain_ratio_spd", "pass", min_eig, "symmetric positive definite", "ok")

    G = np.eye(m) - ratio
    norm_G = ml.spectral_norm(G)
    bound = gain_mismatch_bound(params.rho, params.r)
    if abs(norm_G - bound) <= BOUNDARY_BAND:
        report.add("gain_mismatch", "boundary", norm_G,
                   f"||G|| < {bound:.6g}",
                   "mismatch sits exactly on the bound; treated as feasible with warning")
    elif norm_G < bound:
        report.add("gain_mismatch", "pass", norm_G, f"||G|| < {bound:.6g}", "ok")
    else:
        report.add("gain_mismatch", "fail", norm_G, f"||G|| < {bound:.6g}",
                   "surrogate gain too far from the true high-gain matrix")
    return report


def design(r: int, m: int, s0: float, rho: float, Gamma_tilde=None,
           phi_params: dict | None = None, Q=None, Gamma=None,
           a=None) -> tuple[DesignParams, ValidationReport]:
    """Full design pipeline from a single pole location.

    hurwitz_coefficients -> companion_matrix -> solve_lyapunov (Q defaults to
    the identity) -> derive_p -> funnel pair (phi1 = phi / rho) ->
    validate_design.  ``a`` may be passed directly instead of ``s0``.
    Deterministic: identical inputs give bitwise identical parameters.
    """
    if r < 2:
        raise ValueError("the cascade needs relative degree r >= 2")
    if m < 1:
        raise ValueError("output dimension must be positive")
    if rho <= 1.0:
        raise ValueError("funnel scaling requires rho > 1")

    a = hurwitz_coefficients(r, s0) if a is None else np.asarray(a, dtype=float)
    if a.shape != (r,):
        raise ValueError(f"gain vector a must have length {r}")
    A = companion_matrix(a)
    Q = np.eye(r) if Q is None else ml._square(Q, "Q")
    if Q.shape != (r, r):
        raise ValueError(f"Q must be {r}x{r}, got {Q.shape}")
    if not ml.is_spd(Q):
        raise ValueError("Q must be symmetric positive definite")
    P = ml.solve_lyapunov(A, Q)
    p, p_tilde = derive_p(P, r)

    if Gamma_tilde is None:
        Gamma_tilde = np.eye(m)
    else:
        Gamma_tilde = np.asarray(Gamma_tilde, dtype=float)
        if Gamma_tilde.ndim == 0:
            Gamma_tilde = float(Gamma_tilde) * np.eye(m)
        Gamma_tilde = ml._square(Gamma_tilde, "Gamma_tilde")
    if Gamma_tilde.shape != (m, m):
        raise ValueError(f"Gamma_tilde must be {m}x{m}")
    if not ml.is_spd(Gamma_tilde):
        raise ValueError("surrogate gain matrix must be symmetric positive definite")

    phi_params = dict(phi_params or {"family": "exp-boundary", "c_inf": 0.05,
                                     "c_amp": 1.0, "c_rate": 2.0})
    phi_params.setdefault("max_order", max(r, 2))
    phi = make_funnel(**phi_params)
    phi1 = phi.scaled(1.0 / rho)

    params = DesignParams(r=r, m=m, a=a, p=p, A=A, P=P, Q=Q, p_tilde=p_tilde,
                          rho=float(rho), Gamma_tilde=Gamma_tilde, phi=phi, phi1=phi1)
    return params, validate_design(params, Gamma)
