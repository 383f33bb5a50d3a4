"""Exception hierarchy shared by every module.

Each class carries a ``category`` used by the CLI to print a one-line,
machine-parsable failure and pick an exit code.
"""

from __future__ import annotations


class HissError(Exception):
    category = "Error"
    exit_code = 1


class ShapeError(HissError, ValueError):
    category = "ShapeError"


class DomainError(HissError, ValueError):
    category = "DomainError"


class GraphError(HissError, RuntimeError):
    category = "GraphError"


class NumericalError(HissError, FloatingPointError):
    category = "NumericalError"
    exit_code = 4

    def __init__(self, message: str, timestep: int | None = None):
        if timestep is not None:
            message = f"{message} (timestep {timestep})"
        super().__init__(message)
        self.timestep = timestep


class DivergenceError(NumericalError):
    category = "DivergenceError"


class RateError(HissError, ValueError):
    category = "RateError"


class AlignmentError(HissError, ValueError):
    category = "AlignmentError"


class ExtrapolationError(HissError, ValueError):
    category = "ExtrapolationError"


class LengthError(HissError, ValueError):
    category = "LengthError"


class FilterError(HissError, ValueError):
    category = "FilterError"


class CalibError(HissError, ValueError):
    category = "CalibError"


class SplitError(HissError, ValueError):
    category = "SplitError"


class ParseError(HissError, ValueError):
    category = "ParseError"
    exit_code = 3

    def __init__(self, message: str, path=None, line: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{':'.join(where)}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class ManifestError(HissError, ValueError):
    category = "ManifestError"
    exit_code = 3


class ConfigError(HissError, ValueError):
    category = "ConfigError"
    exit_code = 2


class IoError(HissError, OSError):
    category = "IoError"
    exit_code = 3
