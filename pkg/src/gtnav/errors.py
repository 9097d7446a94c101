"""Exception types raised across the package."""


class GtNavError(Exception):
    """Base class for all package errors."""


class InputDomainError(GtNavError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class UndefinedMetricError(GtNavError, ValueError):
    """A path metric is undefined for the given trajectory."""


class DegenerateDataError(GtNavError, ValueError):
    """Statistical input has no variability where the test needs some."""


class ConfigError(GtNavError):
    """Scenario, manifest or planner configuration is invalid."""


class ParseError(GtNavError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
