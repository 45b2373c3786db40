"""Exception hierarchy.

Every failure a pipeline stage can signal is a subclass of
:class:`GeoNMFError`; the CLI maps these to exit code 3 and prints the class
name.
"""


class GeoNMFError(Exception):
    """Base class for all pipeline errors."""


class ZeroRow(GeoNMFError, ValueError):
    def __init__(self, row):
        self.row = int(row)
        super().__init__(f"row {self.row} has zero total count; prune it first")


class NoConvergence(GeoNMFError, RuntimeError):
    def __init__(self, index, residual=None):
        self.index = index
        self.residual = residual
        msg = f"solver did not converge for item {index}"
        if residual is not None:
            msg += f" (residual {residual:.3e})"
        super().__init__(msg)


class AllOutliers(GeoNMFError):
    pass


class TooFewInliers(GeoNMFError):
    pass


class DisconnectedDegenerate(GeoNMFError):
    def __init__(self, positions):
        self.positions = list(positions)
        super().__init__(f"{len(self.positions)} inliers have zero affinity degree")


class EmptyColumn(GeoNMFError):
    def __init__(self, column):
        self.column = int(column)
        super().__init__(f"topic column {self.column} sums to zero")


class DegenerateTheta(GeoNMFError):
    pass


class ShapeMismatch(GeoNMFError, ValueError):
    pass


class MalformedHeader(GeoNMFError, ValueError):
    pass


class IndexOutOfRange(GeoNMFError, ValueError):
    def __init__(self, line, msg=""):
        self.line = line
        super().__init__(f"line {line}: index out of range {msg}".rstrip())


class CountNonPositive(GeoNMFError, ValueError):
    def __init__(self, line):
        self.line = line
        super().__init__(f"line {line}: count must be positive")


class VocabSizeMismatch(GeoNMFError, ValueError):
    pass


class EmptyAfterPrune(GeoNMFError):
    pass


class IoFailure(GeoNMFError, OSError):
    pass
