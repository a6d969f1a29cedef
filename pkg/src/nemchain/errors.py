"""Exception hierarchy shared by all nemchain modules."""


class NemchainError(Exception):
    """Base class for every error raised by this package."""


class DomainError(NemchainError, ValueError):
    """An input lies outside the domain of a physical formula."""


class ConfigurationError(NemchainError, ValueError):
    """A required setting is missing or inconsistent."""


class ContractError(NemchainError, ValueError):
    """Arguments do not satisfy an operation's preconditions (shapes, bases)."""


class ResourceError(NemchainError, MemoryError):
    """A requested object would exceed the configured memory budget."""

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class FitError(NemchainError, ValueError):
    """Too little usable data to perform a fit."""


class NumericalError(NemchainError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class IntegrationError(NumericalError):
    """The ODE integrator could not continue (step-size underflow, non-finite state)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class IntegrityError(NumericalError):
    """A propagated state violated trace, Hermiticity or positivity bounds."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class InvalidStateError(NumericalError, ValueError):
    """A density matrix is not a valid (positive, normalised) quantum state."""


class InapplicableError(NemchainError, ValueError):
    """A closed-form shortcut was requested outside its domain of validity."""


class UsageError(NemchainError):
    """Bad command-line or experiment request (unknown kind, empty grid)."""


class ExperimentError(NumericalError):
    """A realization inside an ensemble failed; carries its index and time."""

    def __init__(self, message, index=None, t=None):
        super().__init__(message)
        self.index = index
        self.t = t


class UndefinedDistributionError(NemchainError, ValueError):
    """Site populations sum to zero, so no normalised distribution exists."""
