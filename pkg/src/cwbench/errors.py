"""Exception hierarchy shared by all modules."""


class CWBenchError(Exception):
    """Base class for every error raised by the package."""


class ChartMismatch(CWBenchError):
    pass


class RankMismatch(CWBenchError):
    pass


class NotClosed(CWBenchError):
    pass


class NotFlat(CWBenchError):
    pass


class NotInvertible(CWBenchError):
    pass


class MissingMetric(CWBenchError):
    pass


class NotAntisymmetric(CWBenchError):
    pass


class WrongDegree(CWBenchError):
    pass


class NotExact(CWBenchError):
    pass


class RankJump(CWBenchError):
    pass


class DimensionJump(CWBenchError):
    pass


class NoSpectralGap(CWBenchError):
    pass


class BandLimitExceeded(CWBenchError):
    pass


class AugmentationFailed(CWBenchError):
    pass


class IllConditioned(CWBenchError):
    pass


class ParseError(CWBenchError):
    """Scene-file parse failure carrying a 1-based line/column position."""

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:{column if column is not None else 1}: "
        elif where:
            where += " "
        super().__init__(where + message)
