"""Built-in demonstration scenarios with all constants embedded.

* ``precompensator_demo``: the cascade alone (r = 3, one output) tracking
  the signal pair y(t) = exp(-(t-5)^2), u(t) = sin(t), with gains generated
  from a selectable pole location s0 and funnel boundary exp(-2t) + 0.05.
* ``tracking_demo``: output tracking of the nonlinear two-output
  relative-degree-3 plant via the cascade plus funnel controller
  (s0 = 7, rho = 1.1, surrogate gain 2I, controller boundary 2exp(-t)+0.05,
  reference (exp(-(t-5)^2), sin t)).
"""

import numpy as np

from .fcontrol import ControllerConfig
from .funnels import make_controller_funnel
from .paramdesign import design
from .plants import Example2Plant, make_reference
from .simloop import Scenario


def precompensator_demo(s0: float = 5.0, tspan=(0.0, 10.0), sample_step: float = 0.01,
                        rtol: float = 1e-6, atol: float = 1e-8) -> Scenario:
    params, report = design(
        r=3, m=1, s0=s0, rho=1.5, Gamma_tilde=1.0,
        phi_params={"family": "exp-boundary", "c_inf": 0.05, "c_amp": 1.0, "c_rate": 2.0})
    return Scenario(
        mode="open-loop", params=params, tspan=tuple(tspan), rtol=rtol, atol=atol,
        sample_step=sample_step,
        y_signal=make_reference([{"kind": "gaussian-bump", "t0": 5.0}]),
        u_signal=make_reference([{"kind": "sine", "omega": 1.0}]),
        report=report, label=f"precompensator_s0_{s0:g}")


def tracking_demo(s0: float = 7.0, tspan=(0.0, 10.0), sample_step: float = 0.01,
                  rtol: float = 1e-6, atol: float = 1e-8) -> Scenario:
    plant = Example2Plant()
    params, report = design(
        r=3, m=2, s0=s0, rho=1.1, Gamma_tilde=2.0 * np.eye(2),
        phi_params={"family": "exp-boundary", "c_inf": 0.05, "c_amp": 1.0, "c_rate": 3.0},
        Gamma=plant.Gamma)
    phi_fc = make_controller_funnel("exp-boundary", c_inf=0.05, c_amp=2.0,
                                    c_rate=1.0, horizon=float(tspan[1]))
    return Scenario(
        mode="closed-loop", params=params, tspan=tuple(tspan), rtol=rtol, atol=atol,
        sample_step=sample_step,
        plant=plant,
        reference=make_reference([{"kind": "gaussian-bump", "t0": 5.0},
                                  {"kind": "sine", "omega": 1.0}]),
        controller=ControllerConfig(r=3, m=2, phi_fc=phi_fc),
        gamma=plant.Gamma, report=report, label=f"tracking_s0_{s0:g}")
