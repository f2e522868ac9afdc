"""Exception types raised by the simulation package."""


class SimulationError(Exception):
    """Base class for numerical and physical failures."""


class ParameterError(SimulationError):
    """A physical parameter is out of its allowed domain."""


class ProtocolError(SimulationError):
    """Stage times or field magnitudes are inconsistent."""


class RegimeError(SimulationError):
    """The rotational dynamics left the gyroscopically stable regime."""


class IntegrationError(SimulationError):
    """An integrator failed, hit the Euler-angle singularity band or lost unitarity."""


class ClosureError(SimulationError):
    """The closure solver did not bring both arms back together."""

    def __init__(self, message, residuals=None, protocol=None):
        super().__init__(message)
        self.residuals = residuals
        self.protocol = protocol


class ConfigError(ValueError):
    """A scenario document failed validation. Carries every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) if self.errors else "invalid configuration")
