"""Exception types raised across the package."""


class HeraldSimError(Exception):
    """Base class for all package errors."""


class StructureError(HeraldSimError, ValueError):
    """Operators, states or models that do not share a Hilbert space layout."""


class ParameterError(HeraldSimError, ValueError):
    """Physical or numerical parameters outside their admissible range."""


class IntegrationError(HeraldSimError, RuntimeError):
    """The adaptive integrator could not make progress.

    Attributes
    ----------
    time : float
        Simulation time (units of 1/gamma) at which the step size underflowed.
    """

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


class NoHeraldError(HeraldSimError, ArithmeticError):
    """The herald probability is below the cutoff, so fidelity is undefined."""

    def __init__(self, efficiency: float, cutoff: float):
        super().__init__(
            f"herald probability {efficiency:.3e} below cutoff {cutoff:.1e}; "
            "fidelity is undefined"
        )
        self.efficiency = efficiency
        self.cutoff = cutoff


class CalibrationError(HeraldSimError, RuntimeError):
    """The efficiency target cannot be reached inside the parameter bracket."""

    def __init__(self, message: str, eta_low: float = float("nan"), eta_high: float = float("nan")):
        super().__init__(f"{message} (eta at bracket ends: {eta_low:.4e}, {eta_high:.4e})")
        self.eta_low = eta_low
        self.eta_high = eta_high
