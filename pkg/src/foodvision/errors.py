"""Exception types shared across the package."""


class FoodvisionError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(FoodvisionError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class NumericError(FoodvisionError, ArithmeticError):
    """A forward computation produced NaN or Inf."""


class TapeStateError(FoodvisionError, RuntimeError):
    """The tape is in a state that forbids the requested operation."""


class OracleError(FoodvisionError, RuntimeError):
    """A test oracle precondition failed (e.g. the checked function is not deterministic)."""


class GeometryError(FoodvisionError, ValueError):
    """A spatial layer configuration yields an empty or mismatched output."""


class StatisticsError(FoodvisionError, ValueError):
    """Too few samples to compute the requested statistic."""


class LabelError(FoodvisionError, ValueError):
    """A class label is outside the valid range."""


class ConfigError(FoodvisionError, ValueError):
    """An invalid configuration value was supplied."""


class SplitError(FoodvisionError, ValueError):
    """A dataset cannot be split as requested."""


class DecodeError(FoodvisionError, ValueError):
    """An image file could not be decoded."""


class DivergenceError(FoodvisionError, RuntimeError):
    """Training produced a non-finite loss."""


class EvaluationError(FoodvisionError, ValueError):
    """Evaluation was requested on an empty or invalid split."""


class ValidationError(FoodvisionError, ValueError):
    """A data file violates its schema or invariants."""


class UnknownClassError(FoodvisionError, KeyError):
    """A class name is not present in the store or manifest."""


class CheckpointError(FoodvisionError, ValueError):
    """A model checkpoint file is malformed or incompatible."""
