class ShiftLabError(Exception):
    """
    Base class for all shiftlab exceptions
    """


class ShiftLabConfigError(ShiftLabError):
    """
    A configuration value or an argument passed to a function has an invalid type or value
    """

    def __init__(self, message: str, key: str = None, warnings: list = None):
        super().__init__(message)
        self.key = key
        """The dotted config key path that caused the error, if any"""
        self.warnings = list(warnings or [])
        """The ConfigWarnings collected while parsing, if any"""


class ShiftLabDimensionError(ShiftLabConfigError):
    """
    Two tensors that take part in one operation have incompatible shapes
    """


class ShiftLabStaleTapeError(ShiftLabError):
    """
    A backward pass was requested on a tape that has already been replayed or cleared
    """


class ShiftLabBatchError(ShiftLabError):
    """
    A batch does not meet the preconditions of a layer or a training step
    """


class ShiftLabDataError(ShiftLabError):
    """
    A dataset is empty, inconsistent between its domains, or too small to split
    """


class ShiftLabDataIOError(ShiftLabDataError):
    """
    A dataset file could not be read
    """


class ShiftLabPoolExhaustedError(ShiftLabDataError):
    """
    The unlabeled target pool cannot supply the ids requested for a round
    """


class ShiftLabStatsError(ShiftLabError):
    """
    The inputs of a statistic do not meet its preconditions
    """


class ShiftLabIOError(ShiftLabError):
    """
    A results file could not be written
    """
