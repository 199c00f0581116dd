"""Exception hierarchy shared by all modules."""


class SwodtError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class GridError(SwodtError):
    """Invalid grid specification or network (e.g. disconnected graph)."""


class SamplerError(SwodtError):
    pass


class DatasetError(SwodtError):
    """Malformed or unusable dataset.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = "line {}: {}".format(line, message)
        super().__init__(message)
        self.line = line


class OptimizerError(SwodtError):
    pass


class LPError(SwodtError):
    """Numerical failure inside the simplex solver."""

    def __init__(self, message, iterations=None):
        if iterations is not None:
            message = "{} (after {} iterations)".format(message, iterations)
        super().__init__(message)
        self.iterations = iterations


class RuleError(SwodtError):
    pass


class DispatchError(SwodtError):
    pass
