"""Exception hierarchy shared by all agprop modules."""


class AgpropError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AgpropError):
    """Invalid scenario configuration. ``path`` is a JSON-pointer to the key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path


class NumericalError(AgpropError):
    """Base for failures of a numerical procedure (CLI exit code 3)."""


class ModelEvaluationError(NumericalError):
    pass


class CausticProximityError(NumericalError):
    pass


class StepSizeUnderflow(NumericalError):
    pass


class DomainCoverageError(NumericalError):
    pass


class StabilityGuardError(NumericalError):
    pass


class GridMismatchError(AgpropError):
    pass


class SiegelViolationError(AgpropError):
    pass


class NotUnitaryError(AgpropError):
    pass


class BudgetExceededError(AgpropError):
    pass


class CausticAtRootError(NumericalError):
    pass


class NoBranchFoundError(NumericalError):
    pass


class UnresolvedCrossingError(NumericalError):
    pass
