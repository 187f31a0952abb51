"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes are missing, empty, or incompatible for an operation."""


class ParameterError(ValueError):
    """A numeric argument is outside its valid range."""


class ConfigError(ValueError):
    """A model or pipeline configuration cannot be realized."""


class LabelError(ValueError):
    """A label vector is not one-hot / a label index is out of range."""


class DegenerateBatchError(ValueError):
    """Batch statistics were requested for a batch of size < 2."""


class ParseError(ValueError):
    """A dataset file could not be parsed.

    Carries the offending path and 1-based line number when known.
    """

    def __init__(self, message: str, path=None, line=None):
        detail = message
        if path is not None:
            detail += f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(detail)
        self.path = path
        self.line = line


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, truncated, or inconsistent."""


class NumericError(RuntimeError):
    """Training produced non-finite values; names the first bad tensor."""
