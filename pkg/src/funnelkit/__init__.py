"""Funnel pre-compensator cascades and output-feedback funnel control."""

from .errors import (ControllerDomainViolation, FunnelViolation, GuardViolation,
                     IntegrationAbort)
from .fcontrol import ControllerConfig, funnel_control, rho_chain
from .funnels import (ControllerFunnelSpec, FunnelSpec, funnel_derivs,
                      make_controller_funnel, make_funnel)
from .paramdesign import (DesignParams, ValidationReport, companion_matrix, design,
                          derive_p, gain_mismatch_bound, hurwitz_coefficients,
                          validate_design)
from .plants import (BifPlant, Example2Plant, ReferenceSpec, bif_plant_rhs,
                     example2_plant_rhs, linear_to_bif, make_reference,
                     reference_derivs)
from .precomp import cascade_rhs, fp_gain, zero_state
from .simloop import Scenario, SimResult, integrate, run_closed_loop, run_open_loop
from .zderiv import DerivTable, closed_formula_report, output_derivatives

__version__ = "0.1.0"

__all__ = [
    "BifPlant", "ControllerConfig", "ControllerDomainViolation",
    "ControllerFunnelSpec", "DerivTable", "DesignParams", "Example2Plant",
    "FunnelSpec", "FunnelViolation", "GuardViolation", "IntegrationAbort",
    "ReferenceSpec", "Scenario", "SimResult", "ValidationReport",
    "bif_plant_rhs", "cascade_rhs", "closed_formula_report", "companion_matrix",
    "derive_p", "design", "example2_plant_rhs", "fp_gain", "funnel_control",
    "funnel_derivs", "gain_mismatch_bound", "hurwitz_coefficients", "integrate",
    "linear_to_bif", "make_controller_funnel", "make_funnel", "make_reference",
    "output_derivatives", "reference_derivs", "rho_chain", "run_closed_loop",
    "run_open_loop", "validate_design", "zero_state",
]
