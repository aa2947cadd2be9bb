"""Exception and warning types shared across the package."""


class CounterliftError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBoundsError(CounterliftError):
    """A probability-like value lies outside its valid range."""


class DomainError(CounterliftError):
    """A density or transform was evaluated outside its support."""


class FamilyMismatchError(CounterliftError):
    """An operation was called with a model family it does not support."""


class TooFewSamplesError(CounterliftError):
    """A sample is too small for the requested estimate."""


class DegenerateVarianceError(CounterliftError):
    """Sample moments are incompatible with the latent composition model."""


class OptimizerFailure(CounterliftError):
    """Likelihood maximization could not be started or did not finish."""


class DegenerateSegmentError(CounterliftError):
    """The feasible interval for p11 has collapsed to a single point."""


class QuadratureFailure(CounterliftError):
    """Numerical integration did not reach the requested tolerance."""


class EffectiveSampleSizeError(CounterliftError):
    """Importance-sampling weights degenerated below the safety threshold."""


class MissingArmError(CounterliftError):
    """Training data lacks one of the two treatment arms."""


class SingleClassArmError(CounterliftError):
    """A treatment arm contains only one outcome class."""


class DimensionMismatchError(CounterliftError):
    """A feature vector does not match the model's expected dimension."""


class ClampWarning(UserWarning):
    """A fitted or deconvolved quantity was clamped to keep it feasible."""
