"""Exception types raised across the package."""


class HarvestError(Exception):
    """Base class for all package errors."""


class InvalidArm(HarvestError, ValueError):
    pass


class Unreachable(HarvestError, ValueError):
    pass


class IllegalAction(HarvestError, ValueError):
    pass


class InvalidState(HarvestError, ValueError):
    pass


class InvalidLayout(HarvestError, ValueError):
    pass


class TooManyFruits(HarvestError, ValueError):
    pass


class GenerationFailed(HarvestError, RuntimeError):
    pass


class SearchBudgetExceeded(HarvestError, RuntimeError):
    pass


class NonFiniteLoss(HarvestError, FloatingPointError):
    """Raised when a PPO update produces NaN or Inf; carries a diagnostics dict."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MissingArtifact(HarvestError, FileNotFoundError):
    """A layout, checkpoint or config file named in an experiment does not exist."""
