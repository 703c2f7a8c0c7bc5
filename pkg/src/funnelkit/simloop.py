"""Adaptive integration with funnel guards and the two scenario drivers.

The integrator is an explicit Dormand-Prince 5(4) embedded pair with a
standard proportional step controller (safety 0.9, growth clamped at x5,
shrink at x0.1).  Funnel feasibility is enforced *during* stepping: a guard
callback is evaluated at every trial stage, and the feedback laws raise
structured exceptions when a state reaches a boundary; either event rejects
the trial step and halves it.  Dense output is fourth-order Hermite
interpolation on the accepted nodes.

Two drivers assemble full runs:

* ``run_open_loop``: the cascade alone, fed by a given signal pair (u, y).
* ``run_closed_loop``: plant + cascade + funnel controller in continuous
  feedback (the input is evaluated inside the right-hand side, not held).
"""

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import fcontrol, precomp, zderiv
from .errors import GuardViolation, IntegrationAbort
from .fcontrol import ControllerConfig
from .paramdesign import DesignParams, ValidationReport
from .plants import ReferenceSpec, reference_derivs

GUARD_THRESHOLD = precomp.GAIN_GUARD
MAX_CONSECUTIVE_HALVINGS = 40

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
# propagation weights are _A[6] (first-same-as-last); _E is the embedded
# error-estimate row
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass
class Trajectory:
    """Accepted integration nodes with derivatives, plus dense evaluation."""

    ts: np.ndarray
    xs: np.ndarray
    fs: np.ndarray
    n_steps: int
    n_rejected: int
    n_guard_rejected: int

    def at(self, t: float) -> np.ndarray:
        """Fourth-order Hermite interpolation at a single time."""
        ts = self.ts
        if t <= ts[0]:
            return self.xs[0].copy()
        if t >= ts[-1]:
            return self.xs[-1].copy()
        k = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[k + 1] - ts[k]
        theta = (t - ts[k]) / h
        t2 = theta * theta
        t3 = t2 * theta
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + theta
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        return (h00 * self.xs[k] + h01 * self.xs[k + 1]
                + h * (h10 * self.fs[k] + h11 * self.fs[k + 1]))

    def sample(self, times) -> np.ndarray:
        return np.stack([self.at(float(t)) for t in np.atleast_1d(times)])


def _error_norm(err, x_old, x_new, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(x_old), np.abs(x_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(t0, x0, f0, rtol, atol, span) -> float:
    scale = atol + rtol * np.abs(x0)
    d0 = float(np.sqrt(np.mean((x0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    return min(h0, span / 10.0)


def integrate(rhs, x0, tspan, rtol: float = 1e-6, atol: float = 1e-8,
              guard=None, max_halvings: int = MAX_CONSECUTIVE_HALVINGS) -> Trajectory:
    """Integrate x' = rhs(t, x) with embedded error control and guards.

    ``guard(t, x)`` returns the smallest dimensionless margin of the state
    (1 - phi ||e|| for every funnel constraint); a trial stage with margin
    <= 1e-8, or a GuardViolation raised inside ``rhs``, rejects the step and
    halves it.  More than ``max_halvings`` consecutive rejected trials, or a
    vanishing step size, aborts with diagnostics.
    """
    t0, t1 = float(tspan[0]), float(tspan[1])
    if t1 <= t0:
        raise ValueError("time span must be increasing")
    x = np.array(x0, dtype=float)
    n = x.size

    def checked_eval(t, state, margin_box):
        if guard is not None:
            margin = guard(t, state)
            margin_box[0] = min(margin_box[0], margin)
            if margin <= GUARD_THRESHOLD:
                raise GuardViolation("funnel constraint violated (gain singularity)",
                                     time=t, margin=margin)
        return rhs(t, state)

    span = t1 - t0
    box = [math.inf]
    f = checked_eval(t0, x, box)
    h = _initial_step(t0, x, f, rtol, atol, span)
    h_min = 1e-13 * span

    ts = [t0]
    xs = [x.copy()]
    fs = [f.copy()]
    t = t0
    n_steps = 0
    n_rejected = 0
    n_guard = 0
    consecutive = 0
    last_margin = math.inf

    while t < t1 - 1e-12 * span:
        h = min(h, t1 - t)
        if h < h_min:
            raise IntegrationAbort(
                f"step size underflow at t = {t:.6g}, funnel margin = {last_margin:.3g}",
                time=t, margin=last_margin,
                partial=Trajectory(np.array(ts), np.array(xs), np.array(fs),
                                   n_steps, n_rejected, n_guard))
        box = [math.inf]
        try:
            k = np.empty((7, n))
            k[0] = f
            for s in range(1, 6):
                xs_stage = x + h * (_A[s] @ k[:s])
                k[s] = checked_eval(t + _C[s] * h, xs_stage, box)
            x_new = x + h * (_A[6] @ k[:6])
            k[6] = checked_eval(t + h, x_new, box)
        except GuardViolation as exc:
            last_margin = exc.margin if exc.margin is not None else box[0]
            n_guard += 1
            n_rejected += 1
            consecutive += 1
            if consecutive > max_halvings:
                raise IntegrationAbort(
                    f"step size underflow at t = {t:.6g}, funnel margin = {last_margin:.3g}",
                    time=t, margin=last_margin,
                    partial=Trajectory(np.array(ts), np.array(xs), np.array(fs),
                                       n_steps, n_rejected, n_guard)) from None
            h *= 0.5
            continue

        err = h * (_E @ k)
        err_norm = _error_norm(err, x, x_new, rtol, atol)
        if err_norm <= 1.0:
            t = t + h
            x = x_new
            f = k[6]
            ts.append(t)
            xs.append(x.copy())
            fs.append(f.copy())
            n_steps += 1
            consecutive = 0
            factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.1, 0.9 * err_norm ** -0.2))
            h *= factor
        else:
            n_rejected += 1
            consecutive += 1
            if consecutive > max_halvings:
                raise IntegrationAbort(
                    f"step size underflow at t = {t:.6g}, funnel margin = {box[0]:.3g}",
                    time=t, margin=box[0],
                    partial=Trajectory(np.array(ts), np.array(xs), np.array(fs),
                                       n_steps, n_rejected, n_guard))
            h *= min(1.0, max(0.1, 0.9 * err_norm ** -0.2))

    return Trajectory(np.array(ts), np.array(xs), np.array(fs),
                      n_steps, n_rejected, n_guard)


# ---------------------------------------------------------------------------
# scenarios and results


@dataclass
class Scenario:
    mode: str                       # "open-loop" | "closed-loop"
    params: DesignParams
    tspan: tuple = (0.0, 10.0)
    rtol: float = 1e-6
    atol: float = 1e-8
    sample_step: float = 0.01
    y_signal: ReferenceSpec | None = None    # open loop
    u_signal: ReferenceSpec | None = None    # open loop
    plant: object = None                     # closed loop
    reference: ReferenceSpec | None = None   # closed loop
    controller: ControllerConfig | None = None
    gamma: np.ndarray | None = None          # true high-gain matrix, if known
    report: ValidationReport | None = None
    label: str = ""


@dataclass
class SimResult:
    """Uniformly sampled trajectory table plus run-level summaries.

    ``columns``/``data`` follow the CSV contract (see ``to_csv``); ``aux``
    holds white-box extras (integrator-chain states) for diagnostics;
    ``state_at``/``z_derivs_at`` give dense access along the accepted
    trajectory.
    """

    columns: list
    data: np.ndarray
    summary: dict
    aux: dict = field(default_factory=dict)
    state_at: object = None
    z_derivs_at: object = None

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.data:
                fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _sample_times(tspan, step) -> np.ndarray:
    t0, t1 = tspan
    count = int(round((t1 - t0) / step))
    times = t0 + step * np.arange(count + 1)
    times[-1] = min(times[-1], t1)
    return times


def _column_names(r: int, m: int, closed_loop: bool) -> list:
    cols = ["t"]
    cols += [f"y_{k}" for k in range(1, m + 1)]
    cols += [f"z_{k}" for k in range(1, m + 1)]
    for j in range(1, r):
        cols += [f"zd{j}_{k}" for k in range(1, m + 1)]
    for i in range(1, r):
        for j in range(1, r + 1):
            cols += [f"z_{i}_{j}_{k}" for k in range(1, m + 1)]
    cols += [f"h_{i}" for i in range(1, r)]
    cols += [f"e_{k}" for k in range(1, m + 1)]
    if closed_loop:
        cols += [f"u_{k}" for k in range(1, m + 1)]
    cols += ["bnd_phi1", "bnd_phi"]
    if closed_loop:
        cols.append("bnd_fc")
    cols += [f"margin_{i}" for i in range(1, r)]
    if closed_loop:
        cols.append("margin_fc")
    return cols


def _norm(v) -> float:
    return float(np.sqrt(np.dot(v, v)))


def run_open_loop(scenario: Scenario) -> SimResult:
    """Drive the cascade with a given signal pair and record everything.

    The error column e_k is y_k - z_k (the approximation error of this
    mode).  Every sampled row is checked against the funnel constraints.
    """
    if scenario.mode != "open-loop":
        raise ValueError("scenario is not open-loop")
    if scenario.y_signal is None or scenario.u_signal is None:
        raise ValueError("open-loop scenario needs y and u signal descriptors")
    if scenario.report is not None and not scenario.report.ok:
        raise ValueError("design validation failed; refusing to simulate")
    params = scenario.params
    r, m = params.r, params.m
    t0, t1 = scenario.tspan

    y_of = scenario.y_signal
    u_of = scenario.u_signal
    x0 = precomp.zero_state(r, m).ravel()

    if not precomp.initial_conditions_ok(precomp.unpack(x0, r, m), y_of(t0), params, t0):
        raise ValueError("initial state violates the funnel constraints")

    def rhs(t, x):
        dstate, _ = precomp.cascade_rhs(precomp.unpack(x, r, m), y_of(t), u_of(t),
                                        params, t)
        return dstate.ravel()

    def guard(t, x):
        return float(np.min(precomp.funnel_margins(precomp.unpack(x, r, m),
                                                   y_of(t), params, t)))

    started = _time.perf_counter()
    traj = integrate(rhs, x0, scenario.tspan, scenario.rtol, scenario.atol, guard)
    elapsed = _time.perf_counter() - started

    times = _sample_times(scenario.tspan, scenario.sample_step)
    cols = _column_names(r, m, closed_loop=False)
    data = np.empty((times.size, len(cols)))
    xi_series = np.empty((times.size, r, m))

    for row, t in enumerate(times):
        t = float(t)
        x = traj.at(t)
        state = precomp.unpack(x, r, m)
        yv = y_of(t)
        table = zderiv.DerivTable(state, yv, params, t, r - 1)
        zds = [table.output_derivative(k) for k in range(r)]
        gains = table.gains()
        errs = precomp.stage_errors(state, yv, params)
        b1 = params.phi1.boundary(t)
        b = params.phi.boundary(t)
        margins = [b1 - _norm(errs[0])] + [b - _norm(errs[i]) for i in range(1, r - 1)]

        vals = [t]
        vals += list(yv)
        vals += list(zds[0])
        for j in range(1, r):
            vals += list(zds[j])
        vals += list(state.ravel())
        vals += list(gains)
        vals += list(yv - zds[0])
        vals += [b1, b]
        vals += margins
        data[row] = vals
        xi_series[row] = reference_derivs(y_of, t, r - 1)

    margin_cols = data[:, [cols.index(f"margin_{i}") for i in range(1, r)]]
    if not np.all(margin_cols > 0.0):
        raise IntegrationAbort("sampled trajectory violates a funnel constraint",
                               time=float(times[int(np.argmin(margin_cols.min(axis=1)))]),
                               margin=float(margin_cols.min()))

    summary = {
        "mode": "open-loop",
        "label": scenario.label,
        "t_final": float(traj.ts[-1]),
        "n_steps": traj.n_steps,
        "n_rejected": traj.n_rejected,
        "n_guard_rejected": traj.n_guard_rejected,
        "runtime_s": elapsed,
        "sup_gains": [float(np.max(data[:, cols.index(f"h_{i}")])) for i in range(1, r)],
        "min_margins": [float(np.min(data[:, cols.index(f"margin_{i}")])) for i in range(1, r)],
        "sup_error": float(np.max(np.sqrt(
            sum(data[:, cols.index(f"e_{k}")] ** 2 for k in range(1, m + 1))))),
    }
    if scenario.report is not None:
        summary["design_report"] = scenario.report.as_dict()

    def z_derivs_at(t, jmax=r - 1):
        x = traj.at(float(t))
        return zderiv.output_derivatives(precomp.unpack(x, r, m), y_of(float(t)),
                                         params, float(t), jmax)

    return SimResult(columns=cols, data=data, summary=summary,
                     aux={"xi": xi_series},
                     state_at=traj.at, z_derivs_at=z_derivs_at)


def run_closed_loop(scenario: Scenario) -> SimResult:
    """Plant + cascade + funnel controller, with continuous feedback.

    Joint state = plant state (+) cascade state.  Each evaluation takes the
    plant output y, computes (z, z', ..., z^(r-1)) from the cascade alone,
    forms the error vector against the reference derivatives, and applies
    the funnel feedback; the input drives both plant and cascade.
    """
    if scenario.mode != "closed-loop":
        raise ValueError("scenario is not closed-loop")
    plant = scenario.plant
    cfg = scenario.controller
    ref = scenario.reference
    if plant is None or cfg is None or ref is None:
        raise ValueError("closed-loop scenario needs plant, controller, and reference")
    if scenario.report is not None and not scenario.report.ok:
        raise ValueError("design validation failed; refusing to simulate")
    params = scenario.params
    r, m = params.r, params.m
    n_plant = plant.n_state
    t0, t1 = scenario.tspan

    x0 = np.concatenate([plant.init_state(), precomp.zero_state(r, m).ravel()])

    def split(x):
        return x[:n_plant], precomp.unpack(x[n_plant:], r, m)

    def errvec(state, yv, t):
        zds = zderiv.output_derivatives(state, yv, params, t, r - 1)
        return zds - reference_derivs(ref, t, r - 1), zds

    xp0, casc0 = split(x0)
    y0 = plant.output(xp0)
    if not precomp.initial_conditions_ok(casc0, y0, params, t0):
        raise ValueError("initial state violates the funnel constraints")
    e0, _ = errvec(casc0, y0, t0)
    if not fcontrol.domain_ok(e0, cfg, t0):
        raise ValueError("initial error vector outside the controller domain")

    def rhs(t, x):
        xp, casc = split(x)
        yv = plant.output(xp)
        evec, _ = errvec(casc, yv, t)
        u = fcontrol.funnel_control(evec, cfg, t)
        dplant = plant.rhs(xp, u, t)
        dcasc, _ = precomp.cascade_rhs(casc, yv, u, params, t)
        return np.concatenate([dplant, dcasc.ravel()])

    def guard(t, x):
        xp, casc = split(x)
        return float(np.min(precomp.funnel_margins(casc, plant.output(xp), params, t)))

    started = _time.perf_counter()
    try:
        traj = integrate(rhs, x0, scenario.tspan, scenario.rtol, scenario.atol, guard)
        partial_exc = None
    except IntegrationAbort as exc:
        if exc.partial is None or exc.partial.ts.size < 2:
            raise
        traj = exc.partial
        partial_exc = exc
    elapsed = _time.perf_counter() - started

    end = float(traj.ts[-1])
    times = _sample_times((t0, end), scenario.sample_step)
    cols = _column_names(r, m, closed_loop=True)
    rows = []
    xi_rows = []
    eta_sup = 0.0

    for t in times:
        t = float(t)
        x = traj.at(t)
        xp, state = split(x)
        yv = plant.output(xp)
        try:
            table = zderiv.DerivTable(state, yv, params, t, r - 1)
            zds = [table.output_derivative(k) for k in range(r)]
            gains = table.gains()
            refd = reference_derivs(ref, t, r - 1)
            evec = np.stack(zds) - refd
            u = fcontrol.funnel_control(evec, cfg, t)
        except GuardViolation:
            # only reachable while salvaging an aborted run, where the last
            # interpolated samples can sit on the boundary
            if partial_exc is None:
                raise
            break
        errs = precomp.stage_errors(state, yv, params)
        b1 = params.phi1.boundary(t)
        b = params.phi.boundary(t)
        b_fc = cfg.phi_fc.boundary(t)
        margins = [b1 - _norm(errs[0])] + [b - _norm(errs[i]) for i in range(1, r - 1)]
        margin_fc = b_fc - _norm(evec[0])

        vals = [t]
        vals += list(yv)
        vals += list(zds[0])
        for j in range(1, r):
            vals += list(zds[j])
        vals += list(state.ravel())
        vals += list(gains)
        vals += list(evec[0])
        vals += list(u)
        vals += [b1, b, b_fc]
        vals += margins
        vals.append(margin_fc)
        rows.append(vals)

        xi_rows.append(plant.chain_states(xp).copy())
        if hasattr(plant, "internal_state"):
            eta_sup = max(eta_sup, abs(plant.internal_state(xp)))

    data = np.array(rows)
    xi_series = np.array(xi_rows)
    if data.size == 0:
        raise partial_exc if partial_exc is not None else IntegrationAbort(
            "no samples produced", time=t0)

    summary = {
        "mode": "closed-loop",
        "label": scenario.label,
        "t_final": float(data[-1, 0]),
        "completed": partial_exc is None,
        "n_steps": traj.n_steps,
        "n_rejected": traj.n_rejected,
        "n_guard_rejected": traj.n_guard_rejected,
        "runtime_s": elapsed,
        "sup_gains": [float(np.max(data[:, cols.index(f"h_{i}")])) for i in range(1, r)],
        "min_margins": [float(np.min(data[:, cols.index(f"margin_{i}")])) for i in range(1, r)],
        "min_margin_fc": float(np.min(data[:, cols.index("margin_fc")])),
        "sup_input": float(np.max(np.sqrt(
            sum(data[:, cols.index(f"u_{k}")] ** 2 for k in range(1, m + 1))))),
        "sup_tracking_error": float(np.max(np.sqrt(
            sum((data[:, cols.index(f"y_{k}")] - data[:, cols.index(f"z_{k}")]
                 + data[:, cols.index(f"e_{k}")]) ** 2 for k in range(1, m + 1))))),
        "sup_internal_state": eta_sup,
    }
    if scenario.report is not None:
        summary["design_report"] = scenario.report.as_dict()

    def z_derivs_at(t, jmax=r - 1):
        x = traj.at(float(t))
        xp, state = split(x)
        return zderiv.output_derivatives(state, plant.output(xp), params, float(t), jmax)

    result = SimResult(columns=cols, data=data, summary=summary,
                       aux={"xi": xi_series},
                       state_at=traj.at, z_derivs_at=z_derivs_at)
    if partial_exc is not None:
        partial_exc.partial = result
        raise partial_exc
    return result
