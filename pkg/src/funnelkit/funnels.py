"""Parametric funnel functions with exact analytic derivatives.

A funnel function ``phi`` prescribes the performance region
``||e(t)|| < 1/phi(t)``; its reciprocal ``psi = 1/phi`` is the funnel
boundary.  Two families are provided:

* ``exp-boundary``: psi(t) = c_amp * exp(-c_rate * t) + c_inf, the usual
  exponentially shrinking boundary with asymptotic floor c_inf; phi = 1/psi.
* ``rational-pole``: phi(t) = t / (c_inf * t + c_amp), whose boundary has a
  pole at t = 0 (phi(0) = 0), which makes any initial error admissible.

Both families are smooth with bounded derivatives of every order on
[0, inf) and have positive liminf, so membership in the required funnel
class holds analytically and needs no numeric test.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

EXP_BOUNDARY = "exp-boundary"
RATIONAL_POLE = "rational-pole"
_FAMILIES = (EXP_BOUNDARY, RATIONAL_POLE)


@dataclass(frozen=True)
class FunnelSpec:
    """Validated funnel function phi(t) = scale * phi_family(t).

    ``scale`` exists so that a pair (phi, phi1) with phi = rho * phi1 can
    share one family parameterization and differ by a scalar only.
    """

    family: str
    c_inf: float
    c_amp: float
    c_rate: float = 1.0
    max_order: int = 8
    scale: float = 1.0

    def __call__(self, t: float) -> float:
        return self.value(t)

    def value(self, t: float) -> float:
        if self.family == EXP_BOUNDARY:
            psi = (self.c_amp * math.exp(-self.c_rate * t) + self.c_inf) / self.scale
            return 1.0 / psi
        return self.scale * t / (self.c_inf * t + self.c_amp)

    def boundary(self, t: float) -> float:
        """Funnel boundary 1/phi(t); inf at a pole."""
        if self.family == EXP_BOUNDARY:
            return (self.c_amp * math.exp(-self.c_rate * t) + self.c_inf) / self.scale
        if t == 0.0:
            return math.inf
        return (self.c_inf * t + self.c_amp) / (self.scale * t)

    def scaled(self, factor: float) -> "FunnelSpec":
        return replace(self, scale=self.scale * factor)


def make_funnel(family: str, c_inf: float, c_amp: float = 0.0,
                c_rate: float = 1.0, max_order: int = 8) -> FunnelSpec:
    """Validate parameters and build a funnel function."""
    if family not in _FAMILIES:
        raise ValueError(f"unknown funnel family {family!r}; choose from {_FAMILIES}")
    if c_inf <= 0.0:
        raise ValueError("boundary floor must be positive")
    if c_amp < 0.0:
        raise ValueError("boundary amplitude must be nonnegative")
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    if family == EXP_BOUNDARY and c_rate <= 0.0:
        raise ValueError("decay rate must be positive")
    if family == RATIONAL_POLE and c_amp <= 0.0:
        raise ValueError("pole family needs c_amp > 0")
    return FunnelSpec(family=family, c_inf=float(c_inf), c_amp=float(c_amp),
                      c_rate=float(c_rate), max_order=int(max_order))


def boundary_derivs(f: FunnelSpec, t: float, order: int) -> np.ndarray:
    """(psi, psi', ..., psi^(order)) for the boundary psi = 1/phi.

    For the pole family psi is only finite for t > 0.
    """
    out = np.zeros(order + 1)
    if f.family == EXP_BOUNDARY:
        decayed = f.c_amp * math.exp(-f.c_rate * t)
        out[0] = decayed + f.c_inf
        fac = 1.0
        for k in range(1, order + 1):
            fac *= -f.c_rate
            out[k] = fac * decayed
    else:
        if t <= 0.0:
            raise ValueError("pole-family boundary is infinite at t = 0")
        # psi = c_inf + c_amp / t
        out[0] = f.c_inf + f.c_amp / t
        for k in range(1, order + 1):
            out[k] = f.c_amp * (-1.0) ** k * math.factorial(k) / t ** (k + 1)
    return out / f.scale


def funnel_derivs(f: FunnelSpec, t: float, order: int) -> np.ndarray:
    """(phi, phi', ..., phi^(order)) evaluated analytically.

    exp-boundary uses the reciprocal Leibniz recursion obtained from
    phi * psi = 1:  sum_l C(k,l) phi^(l) psi^(k-l) = 0 for k >= 1, hence
    phi^(k) = -(1/psi) * sum_{l<k} C(k,l) phi^(l) psi^(k-l).
    The pole family has the closed form
    phi^(k) = (-1)^(k+1) k! c_amp c_inf^(k-1) / (c_inf t + c_amp)^(k+1).
    """
    if order > f.max_order:
        raise ValueError("derivative order exceeds funnel smoothness budget")
    out = np.zeros(order + 1)
    if f.family == EXP_BOUNDARY:
        psi = boundary_derivs(f, t, order)
        out[0] = 1.0 / psi[0]
        for k in range(1, order + 1):
            acc = 0.0
            for l in range(k):
                acc += math.comb(k, l) * out[l] * psi[k - l]
            out[k] = -acc / psi[0]
        return out

    den = f.c_inf * t + f.c_amp
    out[0] = f.scale * t / den
    sign = 1.0
    fac = 1.0
    for k in range(1, order + 1):
        fac *= k
        out[k] = f.scale * sign * fac * f.c_amp * f.c_inf ** (k - 1) / den ** (k + 1)
        sign = -sign
    return out


@dataclass(frozen=True)
class ControllerFunnelSpec:
    """Funnel for the feedback controller; a weaker class than the
    pre-compensator funnels.

    Requirements: phi locally absolutely continuous, phi(s) > 0 for s > 0,
    positive liminf, and |phi'(s)| <= c (1 + phi(s)) for some constant c.
    ``growth_const`` is that c, measured on a sampled grid over ``horizon``
    (both families are monotone there, so a grid check suffices).
    """

    base: FunnelSpec
    growth_const: float
    horizon: float

    def __call__(self, t: float) -> float:
        return self.base.value(t)

    def value(self, t: float) -> float:
        return self.base.value(t)

    def boundary(self, t: float) -> float:
        return self.base.boundary(t)


def make_controller_funnel(family: str, c_inf: float, c_amp: float = 0.0,
                           c_rate: float = 1.0, horizon: float = 10.0,
                           grid_points: int = 1000) -> ControllerFunnelSpec:
    """Build a controller funnel and measure its growth constant.

    The constant c = max |phi'| / (1 + phi) over ``grid_points`` samples of
    (0, horizon].
    """
    base = make_funnel(family, c_inf, c_amp, c_rate, max_order=2)
    ts = np.linspace(horizon / grid_points, horizon, grid_points)
    c = 0.0
    for t in ts:
        phi, dphi = funnel_derivs(base, float(t), 1)
        c = max(c, abs(dphi) / (1.0 + phi))
    # small headroom so the sampled estimate upper-bounds the ratio between
    # grid points as well (both families are monotone in the relevant regime)
    return ControllerFunnelSpec(base=base, growth_const=float(1.05 * c),
                                horizon=float(horizon))
