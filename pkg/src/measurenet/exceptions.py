"""Exception hierarchy shared across the package."""


class UsageError(ValueError):
    """A caller passed arguments that violate an operation's preconditions."""


class DimensionError(UsageError):
    """Array shapes are incompatible."""


class DomainError(ValueError):
    """A target or estimator was evaluated outside its domain of definition."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite gradient, divergence, ...)."""


class ConfigError(UsageError):
    """Malformed configuration file or value."""


class ResultsFormatError(ValueError):
    """A results CSV could not be parsed."""


class IdxFormatError(ValueError):
    """Base class for IDX file problems."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxDimensionError(IdxFormatError):
    pass
