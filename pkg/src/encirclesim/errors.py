"""Exception hierarchy shared by all simulator modules."""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class ModelInputError(SimulationError):
    """A dynamics step received a non-finite state or input."""


class ConfigurationError(SimulationError):
    """A scenario or module parameter violates its invariants."""


class TargetOutOfRange(SimulationError):
    """A range measurement was requested for a target beyond the sensor radius."""


class ProtocolError(SimulationError):
    """A task table exchanged during assignment has inconsistent dimensions."""


class AssignmentError(SimulationError):
    """Task assignment failed to converge; carries the unassigned target ids."""

    def __init__(self, message: str, unassigned: tuple[int, ...] = ()):
        super().__init__(message)
        self.unassigned = tuple(unassigned)


class NumericalError(SimulationError):
    """A filter update produced a non-positive innovation variance."""


class AnalysisError(SimulationError):
    """A post-hoc analysis was asked for with insufficient or malformed data."""
