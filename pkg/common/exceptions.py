"""Exception hierarchy shared by every app.

Each class carries the exit code a management command reports when the
error escapes to the command line.
"""


class ExitCode:
    SUCCESS = 0
    USAGE = 1
    DATA = 2
    NUMERIC = 3


class ToolkitError(Exception):
    exit_code = ExitCode.DATA


class UsageError(ToolkitError):
    exit_code = ExitCode.USAGE


class ConfigError(UsageError):
    pass


class DataError(ToolkitError):
    exit_code = ExitCode.DATA


class SystemValidationError(DataError):
    pass


class DatasetFormatError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(DataError):
    pass


class MissingStructureError(DataError):
    pass


class ElementError(DataError):
    """A species code is not covered by an element table."""


class NeighborListError(DataError):
    pass


class GeometryError(NeighborListError):
    """The cutoff does not fit the periodic box."""


class NeighborOverflowError(NeighborListError):
    def __init__(self, required: int, capacity: int):
        self.required = required
        self.capacity = capacity
        super().__init__(
            f"neighbor list overflow: {required} pairs found, capacity {capacity}"
        )


class StaleCacheError(DataError):
    pass


class NumericError(ToolkitError):
    exit_code = ExitCode.NUMERIC


class SingularDistanceError(NumericError):
    def __init__(self, i: int, j: int):
        self.pair = (i, j)
        super().__init__(f"zero distance between atoms {i} and {j}")


class NonFiniteForcesError(NumericError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite forces at step {step}")


class TrainingDivergedError(NumericError):
    pass
