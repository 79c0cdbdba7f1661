"""Exception hierarchy. Everything raised on bad input or failed construction
derives from SpinflowError so the CLI can map it to a domain-error exit code."""


class SpinflowError(Exception):
    """Base class for all package errors."""


class ValidationError(SpinflowError):
    """Invalid parameters or inconsistent inputs."""


class CapExceededError(ValidationError):
    """Requested dimension exceeds a configured hard cap."""


class ConvergenceError(SpinflowError):
    """An iterative method failed to reach its tolerance."""


class InfeasibleGraphError(SpinflowError):
    """Graph constraints (degree / band windows) cannot be satisfied."""


class ConstructionError(SpinflowError):
    """Randomized constructor exhausted its retry budget."""
