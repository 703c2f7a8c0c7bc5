"""Exact derivatives of the cascade output from the cascade state and y only.

The final stage's first state z = z[r-1][1] is the cascade output.  Its
derivatives up to order r-1 are what the feedback controller consumes, and
they are available *without differentiating the measured signal y*: each
stage equation

    z[i][j]' = (a_j + p_j h_i) e_i + z[i][j+1]

is differentiated repeatedly with the Leibniz rule, and every derivative of
the stage error e_i = v_i - z[i][1] at level i only ever needs derivatives
of the previous stage's output v_i = z[i-1][1] of one order less.  Orders
stay within the per-level budget

    budget(i) = jmax - (r - 1 - i),

so the recursion bottoms out at level 1 with e_1 = y - z[1][1] needed at
order zero only; an assertion enforces that no derivative of y is ever
requested.

Gain derivatives come from h_i g_i = 1 with g_i = 1 - phi_i^2 ||e_i||^2:

    D^k g_i = -sum_l C(k,l) D^l(phi_i^2) D^(k-l)(||e_i||^2)      (k >= 1)
    D^k h_i = -h_i sum_{l<k} C(k,l) D^l h_i D^(k-l) g_i.

All entries are memoized per call, so each quantity is computed exactly
once regardless of evaluation order.
"""

import math

import numpy as np

from .errors import FunnelViolation
from .funnels import funnel_derivs
from .paramdesign import DesignParams
from .precomp import GAIN_GUARD

_COMB = [[math.comb(k, l) for l in range(k + 1)] for k in range(16)]


def _comb(k: int, l: int) -> int:
    return _COMB[k][l] if k < 16 else math.comb(k, l)


class DerivTable:
    """Memoized total time derivatives of one cascade evaluation point.

    Levels i and chain indices j are 1-based to mirror the stage equations;
    ``state`` has shape (r-1, r, m).
    """

    def __init__(self, state, y, params: DesignParams, t: float, jmax: int):
        if jmax < 0 or jmax > params.r - 1:
            raise ValueError("derivative order must lie in [0, r-1]")
        self.params = params
        self.r = params.r
        self.m = params.m
        self.t = t
        self.jmax = jmax
        self.state = np.asarray(state, dtype=float).reshape(self.r - 1, self.r, self.m)
        self.y = np.asarray(y, dtype=float).reshape(self.m)
        self.requested_y_order = 0

        self._phi = {}     # level -> ndarray of funnel derivatives
        self._state_d = {}
        self._err = {}
        self._esq = {}
        self._phi2 = {}
        self._g = {}
        self._h = {}

    def budget(self, i: int) -> int:
        return self.jmax - (self.r - 1 - i)

    # -- funnel helpers ----------------------------------------------------

    def _phi_derivs(self, i: int) -> np.ndarray:
        arr = self._phi.get(i)
        if arr is None:
            order = max(self.budget(i) - 1, 0)
            spec = self.params.phi1 if i == 1 else self.params.phi
            arr = funnel_derivs(spec, self.t, order)
            self._phi[i] = arr
        return arr

    def phi_sq(self, i: int, l: int) -> float:
        key = (i, l)
        val = self._phi2.get(key)
        if val is None:
            phi = self._phi_derivs(i)
            val = 0.0
            for j in range(l + 1):
                val += _comb(l, j) * phi[j] * phi[l - j]
            self._phi2[key] = val
        return val

    # -- stage inputs and errors --------------------------------------------

    def vin(self, i: int, k: int) -> np.ndarray:
        if i == 1:
            if k != 0:
                raise RuntimeError(
                    "derivative recursion requested unavailable y derivative")
            self.requested_y_order = max(self.requested_y_order, k)
            return self.y
        return self.state_d(i - 1, 1, k)

    def err(self, i: int, k: int) -> np.ndarray:
        key = (i, k)
        val = self._err.get(key)
        if val is None:
            val = self.vin(i, k) - self.state_d(i, 1, k)
            self._err[key] = val
        return val

    def err_sq(self, i: int, q: int) -> float:
        key = (i, q)
        val = self._esq.get(key)
        if val is None:
            val = 0.0
            for l in range(q + 1):
                val += _comb(q, l) * float(np.dot(self.err(i, l), self.err(i, q - l)))
            self._esq[key] = val
        return val

    # -- gains ---------------------------------------------------------------

    def g(self, i: int, k: int) -> float:
        key = (i, k)
        val = self._g.get(key)
        if val is None:
            if k == 0:
                phi0 = self._phi_derivs(i)[0]
                weighted = phi0 * math.sqrt(self.err_sq(i, 0))
                if 1.0 - weighted <= GAIN_GUARD:
                    raise FunnelViolation(
                        "funnel constraint violated (gain singularity)",
                        level=i, time=self.t, margin=1.0 - weighted)
                val = 1.0 - weighted * weighted
            else:
                val = 0.0
                for l in range(k + 1):
                    val -= _comb(k, l) * self.phi_sq(i, l) * self.err_sq(i, k - l)
            self._g[key] = val
        return val

    def h(self, i: int, k: int) -> float:
        key = (i, k)
        val = self._h.get(key)
        if val is None:
            if k == 0:
                val = 1.0 / self.g(i, 0)
            else:
                acc = 0.0
                for l in range(k):
                    acc += _comb(k, l) * self.h(i, l) * self.g(i, k - l)
                val = -self.h(i, 0) * acc
            self._h[key] = val
        return val

    # -- states ----------------------------------------------------------------

    def state_d(self, i: int, j: int, k: int) -> np.ndarray:
        if k == 0:
            return self.state[i - 1, j - 1]
        key = (i, j, k)
        val = self._state_d.get(key)
        if val is None:
            if j == self.r:
                raise RuntimeError(
                    "derivative recursion requested a derivative of the input row")
            a_j = self.params.a[j - 1]
            p_j = self.params.p[j - 1]
            val = a_j * self.err(i, k - 1)
            conv = np.zeros(self.m)
            for l in range(k):
                conv = conv + _comb(k - 1, l) * self.h(i, l) * self.err(i, k - 1 - l)
            val = val + p_j * conv + self.state_d(i, j + 1, k - 1)
            self._state_d[key] = val
        return val

    def output_derivative(self, k: int) -> np.ndarray:
        return self.state_d(self.r - 1, 1, k)

    def gains(self) -> np.ndarray:
        return np.array([self.h(i, 0) for i in range(1, self.r)])


def output_derivatives(state, y, params: DesignParams, t: float,
                       jmax: int) -> np.ndarray:
    """(z, z', ..., z^(jmax)) of the cascade output, shape (jmax+1, m)."""
    table = DerivTable(state, y, params, t, jmax)
    return np.stack([table.output_derivative(k) for k in range(jmax + 1)])


def closed_formula_derivatives(state, y, params: DesignParams, t: float,
                               jmax: int, convention: str = "chain") -> np.ndarray:
    """Cross-check: the closed-form one-stage expression for z^(j).

    z^(j) = z[r-1][j+1] + sum_{k=0}^{j-1} D^k[(a_idx + p_idx h_{r-1}) e_{r-1}]

    ``convention`` selects the coefficient indexing: "chain" uses
    idx = j - k, which is what repeated differentiation of the stage
    equations produces; "reversed" uses idx = r - k (only coincides for
    j = r).  Both are evaluated from the same derivative table so the
    comparison isolates the indexing question.
    """
    if convention not in ("chain", "reversed"):
        raise ValueError("convention must be 'chain' or 'reversed'")
    table = DerivTable(state, y, params, t, jmax)
    r = params.r
    out = [table.output_derivative(0)]
    for j in range(1, jmax + 1):
        acc = table.state_d(r - 1, j + 1, 0).copy()
        for k in range(j):
            idx = (j - k) if convention == "chain" else (r - k)
            a_c = params.a[idx - 1]
            p_c = params.p[idx - 1]
            term = a_c * table.err(r - 1, k)
            conv = np.zeros(params.m)
            for l in range(k + 1):
                conv = conv + _comb(k, l) * table.h(r - 1, l) * table.err(r - 1, k - l)
            acc = acc + term + p_c * conv
        out.append(acc)
    return np.stack(out)


def closed_formula_report(state, y, params: DesignParams, t: float,
                          jmax: int) -> dict:
    """Max deviation of each closed-formula indexing convention from the
    recursion, to settle which reading is consistent with the stage
    equations."""
    ref = output_derivatives(state, y, params, t, jmax)
    report = {}
    for convention in ("chain", "reversed"):
        alt = closed_formula_derivatives(state, y, params, t, jmax, convention)
        report[convention] = float(np.max(np.abs(alt - ref)))
    report["matching_convention"] = min(("chain", "reversed"), key=lambda c: report[c])
    return report
