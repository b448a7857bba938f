"""Exception types shared across the package."""


class SpectralRKError(Exception):
    """Base class for all solver errors."""


class SingularResolventError(SpectralRKError):
    """A stage system id - z*alpha (or id - h*alpha*A_k) is numerically singular.

    Carries the offending complex argument ``z`` or the mode wavenumber ``mode``.
    """

    def __init__(self, msg, z=None, mode=None):
        super().__init__(msg)
        self.z = z
        self.mode = mode


class ContractionFailureError(SpectralRKError):
    """The fixed-point stage iteration did not converge (step size too large)."""

    def __init__(self, msg, last_ratio=None, step=None):
        super().__init__(msg)
        self.last_ratio = last_ratio
        self.step = step


class NonlinearityOverflowError(SpectralRKError):
    """Non-finite values were produced while evaluating the nonlinearity."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


class DomainExitError(SpectralRKError):
    """The trajectory left the configured solution ball."""

    def __init__(self, msg, step=None, norm=None):
        super().__init__(msg)
        self.step = step
        self.norm = norm


class HorizonExceededError(SpectralRKError):
    """Picard iteration diverged: the time horizon exceeds the contraction range."""


class ReferenceQualityError(SpectralRKError):
    """A reference solution failed its Richardson self-check."""


class DerivativeUnreliableError(SpectralRKError):
    """Finite-difference directional derivative failed the Richardson check."""

    def __init__(self, msg, rel_disagreement=None):
        super().__init__(msg)
        self.rel_disagreement = rel_disagreement


class InsufficientDataError(SpectralRKError):
    """Fewer than three usable points were available for an order fit."""


class ConfigError(SpectralRKError):
    """Invalid experiment configuration (unknown keys, bad values, parse failure)."""
