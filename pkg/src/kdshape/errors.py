"""Exception hierarchy.

Every error raised on purpose by this package derives from ``KdShapeError`` so
callers (and the CLI) can separate data problems from numeric failures.
"""


class KdShapeError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DataError(KdShapeError):
    exit_code = 2


class NumericError(KdShapeError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class AttributeMismatch(DataError):
    pass


class DegenerateCloud(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DatasetMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class EmptyMesh(DataError):
    pass


class EmptySet(DataError):
    pass


class IoError(KdShapeError):
    exit_code = 2


class InvalidBasisSize(DataError):
    pass


class BasisMismatch(DataError):
    """A model file was paired with a basis it was not trained against."""


class FormatError(DataError):
    """Binary container with a wrong magic, version or truncated payload."""


class InsufficientSamples(NumericError):
    def __init__(self, achieved, target):
        self.achieved = achieved
        self.target = target
        super().__init__(f"placed {achieved} of {target} samples before the radius floor")


class ConvergenceFailure(NumericError):
    pass


class ShapeMismatch(DataError):
    pass


class BatchTooSmall(DataError):
    pass


class TapeMismatch(KdShapeError):
    pass


class InvalidSpec(DataError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, message, logits=None):
        self.logits = logits
        super().__init__(message)


class Diverged(NumericError):
    pass
