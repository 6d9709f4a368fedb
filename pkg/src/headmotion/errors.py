"""Exception and warning types shared across the package."""


class HeadMotionError(Exception):
    """Base class for every error this package raises deliberately."""


class InvalidInputError(HeadMotionError, ValueError):
    """Input violates an operation's contract (non-finite values, bad step, length mismatch)."""


class TooShortError(HeadMotionError, ValueError):
    """Series or sample set has fewer elements than the operation requires."""


class DegenerateDataError(HeadMotionError, ValueError):
    """Data carries no usable variation (all-identical samples, constant target)."""


class InvalidConfigError(HeadMotionError, ValueError):
    """Pipeline or model configuration is inconsistent or incomplete."""


class SchemaMismatchError(HeadMotionError, ValueError):
    """Feature names do not match the schema an artifact was built with."""


class ChainMismatchError(HeadMotionError, ValueError):
    """Input artifacts were produced by different upstream configurations."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap before reaching tolerance."""
