"""
Exception hierarchy for stein-hmm.

ConfigError covers bad input (the CLI exits with code 2), EstimationError
covers conditions found while computing (exit code 3).
"""


class SteinHmmError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SteinHmmError, ValueError):
    """Invalid model, argument or configuration."""


class EstimationError(SteinHmmError, RuntimeError):
    """A computation could not produce a meaningful result."""


# hmm_core
class BadDimensions(ConfigError):
    pass


class NegativeEntry(ConfigError):
    pass


class NonStochasticRow(ConfigError):
    pass


class LengthMismatch(ConfigError):
    pass


class IndexOutOfRange(ConfigError):
    pass


class InvalidPerturbation(ConfigError):
    pass


class NotMixing(EstimationError):
    """No power P^K with K <= k_max is strictly positive."""


# perturb
class IndexInA(ConfigError):
    pass


class InsufficientSamples(ConfigError):
    pass


class ZeroVariance(EstimationError):
    """The functional is degenerate (sigma^2 <= 0)."""


# stats
class EmptySample(ConfigError):
    pass


class NonPositiveSd(ConfigError):
    pass


class TooFewPoints(ConfigError):
    pass


class NonPositiveValue(ConfigError):
    pass


# applications
class StateMismatch(ConfigError):
    pass


class InvalidMeasure(ConfigError):
    pass


class InvalidRegion(ConfigError):
    pass


class EmptyNuclei(ConfigError):
    pass


class SymbolOutOfRange(ConfigError):
    pass


class InvalidGrid(ConfigError):
    """An n grid that is empty, non-positive or not strictly increasing."""


# experiments
class ConfigParse(ConfigError):
    pass


class UnknownFunctional(ConfigError):
    pass


class MissingRun(EstimationError):
    pass
