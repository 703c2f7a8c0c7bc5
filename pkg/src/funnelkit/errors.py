"""Structured runtime failures shared across the simulation stack."""


class GuardViolation(RuntimeError):
    """A state left the region where the feedback laws are defined.

    Raised by gain and controller evaluations; the adaptive integrator
    treats it as a rejected trial step.
    """

    def __init__(self, message: str, *, level: int | None = None,
                 time: float | None = None, margin: float | None = None):
        super().__init__(message)
        self.level = level
        self.time = time
        self.margin = margin


class FunnelViolation(GuardViolation):
    """A pre-compensator error hit its funnel boundary (gain singularity)."""


class ControllerDomainViolation(GuardViolation):
    """The scaled error vector left the controller's admissible domain."""


class IntegrationAbort(RuntimeError):
    """Adaptive stepping could not continue (persistent guard violation or
    step-size underflow); carries the partially integrated trajectory."""

    def __init__(self, message: str, *, time: float, margin: float | None = None,
                 partial=None):
        super().__init__(message)
        self.time = time
        self.margin = margin
        self.partial = partial
