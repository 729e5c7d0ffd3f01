"""Exception types shared across the library.

All inherit from ValueError so callers who do not care about the fine
distinction can catch one base class. The CLI maps these onto exit codes.
"""


class DimensionError(ValueError):
    """Tensor shapes do not conform to the operation's contract."""


class NumericError(ValueError):
    """A non-finite value (NaN/Inf) appeared where finiteness is required."""


class ContractError(ValueError):
    """An operation precondition was violated (e.g. mismatched labels)."""


class ConfigError(ValueError):
    """An invalid configuration value or combination."""


class DataFormatError(ValueError):
    """A dataset file is malformed; carries file context in the message."""


class CheckpointError(ValueError):
    """A checkpoint file failed validation (magic, version, or shapes)."""
