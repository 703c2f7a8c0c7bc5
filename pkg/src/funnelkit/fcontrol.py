"""High-relative-degree funnel feedback law.

The controller works on the stacked error vector
e_vec = (e', e'', ..., e^(r-1)')' in R^(rm) with e = z - y_ref.  Scaled by
the controller funnel, it is folded into a single direction w by the
recursion

    rho_1(eta_1) = eta_1
    rho_k(eta_1..eta_k) = eta_k + gamma(rho_{k-1}(eta_1..eta_{k-1}))
    gamma(v) = v / (1 - ||v||^2)            (= alpha(||v||^2) v)

which is defined as long as every intermediate stays in the open unit ball.
The input is then

    u = (N o alpha)(||w||^2) w = -w / (1 - ||w||^2)

for the simple feasible choices N(s) = -s and alpha(s) = 1/(1-s); both are
kept as configuration hooks for other admissible (N, alpha) pairs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ControllerDomainViolation
from .funnels import ControllerFunnelSpec

DOMAIN_GUARD = 1e-8


def _default_surjection(s: float) -> float:
    return -s


def _default_bijection(s: float) -> float:
    return 1.0 / (1.0 - s)


@dataclass(frozen=True)
class ControllerConfig:
    r: int
    m: int
    phi_fc: ControllerFunnelSpec
    surjection: object = _default_surjection      # N: R -> R, surjective
    bijection: object = _default_bijection        # alpha: [0,1) -> [1,inf)


def rho_chain(eta, r: int, m: int, *, time: float | None = None,
              collect_margins: list | None = None) -> np.ndarray:
    """Fold the scaled error vector into w = rho_r(eta) with ||w|| < 1.

    ``eta`` is the stacked vector (eta_1', ..., eta_r')' in R^(rm).  Raises
    when an intermediate norm reaches 1 - 1e-8, naming the failing level.
    ``collect_margins`` optionally receives 1 - ||rho_k|| per level.
    """
    eta = np.asarray(eta, dtype=float).reshape(r, m)
    rho = None
    for k in range(1, r + 1):
        if rho is None:
            rho = eta[0].copy()
        else:
            nsq = float(rho @ rho)
            rho = eta[k - 1] + rho / (1.0 - nsq)
        margin = 1.0 - float(np.sqrt(rho @ rho))
        if collect_margins is not None:
            collect_margins.append(margin)
        if margin <= DOMAIN_GUARD:
            raise ControllerDomainViolation(
                f"error vector outside controller domain at recursion level {k}",
                level=k, time=time, margin=margin)
    return rho


def funnel_control(errvec, cfg: ControllerConfig, t: float) -> np.ndarray:
    """Feedback input u = N(alpha(||w||^2)) w with w = rho_r(phi_fc(t) e_vec)."""
    errvec = np.asarray(errvec, dtype=float).reshape(cfg.r, cfg.m)
    w = rho_chain(cfg.phi_fc.value(t) * errvec, cfg.r, cfg.m, time=t)
    gain = cfg.surjection(cfg.bijection(float(w @ w)))
    return gain * w


def controller_margins(errvec, cfg: ControllerConfig, t: float) -> np.ndarray:
    """Margins 1 - ||rho_k|| of every recursion level (no exception path)."""
    errvec = np.asarray(errvec, dtype=float).reshape(cfg.r, cfg.m)
    margins: list = []
    try:
        rho_chain(cfg.phi_fc.value(t) * errvec, cfg.r, cfg.m,
                  time=t, collect_margins=margins)
    except ControllerDomainViolation:
        pass
    out = np.full(cfg.r, -np.inf)
    out[: len(margins)] = margins
    return out


def domain_ok(errvec, cfg: ControllerConfig, t: float) -> bool:
    """Initial-condition check: is phi_fc(t) e_vec inside the domain?"""
    try:
        funnel_control(errvec, cfg, t)
    except ControllerDomainViolation:
        return False
    return True
