"""Funnel pre-compensator dynamics: one stage and the cascade of r-1 stages.

A single pre-compensator with design gains (a, p), surrogate gain matrix
Gamma_tilde and funnel phi filters an input signal v and produces internal
chain states z_1..z_r:

    z_j' = (a_j + p_j h) (v - z_1) + z_{j+1}     j < r
    z_r' = (a_r + p_r h) (v - z_1) + Gamma_tilde u
    h    = 1 / (1 - phi^2 ||v - z_1||^2)

The cascade feeds the measured output y into stage 1 (funnel phi1) and each
stage's first state into the next stage (funnel phi); all stages share
(a, p, Gamma_tilde).  The gain h blows up as the stage error approaches its
funnel boundary, which is what keeps the error strictly inside.
"""

import math

import numpy as np

from .errors import FunnelViolation
from .paramdesign import DesignParams

GAIN_GUARD = 1e-8


def zero_state(r: int, m: int) -> np.ndarray:
    """Cascade state z[i][j] in R^m for i = 1..r-1, j = 1..r, all zeros."""
    return np.zeros((r - 1, r, m))


def pack(state: np.ndarray) -> np.ndarray:
    return np.asarray(state, dtype=float).ravel()


def unpack(flat: np.ndarray, r: int, m: int) -> np.ndarray:
    return np.asarray(flat, dtype=float).reshape(r - 1, r, m)


def fp_gain(phi_t: float, err: np.ndarray, *, level: int | None = None,
            time: float | None = None) -> float:
    """Gain h = 1/(1 - phi^2 ||err||^2), defined only while phi ||err|| < 1.

    The hard stop at phi ||err|| >= 1 - 1e-8 turns an imminent boundary
    contact into a structured failure instead of a numerical singularity.
    """
    weighted = phi_t * math.sqrt(float(np.dot(err, err)))
    margin = 1.0 - weighted
    if margin <= GAIN_GUARD:
        raise FunnelViolation("funnel constraint violated (gain singularity)",
                              level=level, time=time, margin=margin)
    return 1.0 / (1.0 - weighted * weighted)


def cascade_rhs(state: np.ndarray, y: np.ndarray, u: np.ndarray,
                params: DesignParams, t: float):
    """Time derivative of the full cascade state plus the stage gains.

    ``state`` has shape (r-1, r, m).  Stage i (1-based) receives
    v_i = y for i = 1 and v_i = z[i-1][1] otherwise, uses funnel phi1 for
    i = 1 and phi for i >= 2, and returns gains (h_1, ..., h_{r-1}) for
    logging so callers never recompute them.
    """
    r, m = params.r, params.m
    state = np.asarray(state, dtype=float).reshape(r - 1, r, m)
    y = np.asarray(y, dtype=float).reshape(m)
    u = np.asarray(u, dtype=float).reshape(m)

    phi1_t = params.phi1.value(t)
    phi_t = params.phi.value(t)
    drive = params.Gamma_tilde @ u

    dstate = np.empty_like(state)
    gains = np.empty(r - 1)
    a, p = params.a, params.p
    for i in range(r - 1):
        v = y if i == 0 else state[i - 1, 0]
        err = v - state[i, 0]
        h = fp_gain(phi1_t if i == 0 else phi_t, err, level=i + 1, time=t)
        gains[i] = h
        coeff = a + p * h
        for j in range(r - 1):
            dstate[i, j] = coeff[j] * err + state[i, j + 1]
        dstate[i, r - 1] = coeff[r - 1] * err + drive
    return dstate, gains


def stage_errors(state: np.ndarray, y: np.ndarray, params: DesignParams):
    """Stage input errors e_i = v_i - z[i][1], shape (r-1, m)."""
    r, m = params.r, params.m
    state = np.asarray(state, dtype=float).reshape(r - 1, r, m)
    errs = np.empty((r - 1, m))
    errs[0] = np.asarray(y, dtype=float).reshape(m) - state[0, 0]
    for i in range(1, r - 1):
        errs[i] = state[i - 1, 0] - state[i, 0]
    return errs


def funnel_margins(state: np.ndarray, y: np.ndarray, params: DesignParams,
                   t: float) -> np.ndarray:
    """Dimensionless margins 1 - phi_i ||e_i|| per stage (positive = inside)."""
    errs = stage_errors(state, y, params)
    phi1_t = params.phi1.value(t)
    phi_t = params.phi.value(t)
    out = np.empty(len(errs))
    for i, e in enumerate(errs):
        phi_i = phi1_t if i == 0 else phi_t
        out[i] = 1.0 - phi_i * math.sqrt(float(np.dot(e, e)))
    return out


def initial_conditions_ok(state: np.ndarray, y0: np.ndarray,
                          params: DesignParams, t0: float = 0.0) -> bool:
    """Feasibility of the start state: every stage strictly inside its funnel."""
    return bool(np.all(funnel_margins(state, y0, params, t0) > 0.0))
