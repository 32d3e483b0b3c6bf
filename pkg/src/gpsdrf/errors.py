"""Exception hierarchy shared by every estimation module."""

from __future__ import annotations


class GpsDrfError(ValueError):
    """Base class for all library errors."""


class MissingColumn(GpsDrfError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"MissingColumn({name!r})")


class ParseError(GpsDrfError):
    """A referenced cell is empty or not a decimal number.

    ``row`` is the 1-based data row (header excluded).
    """

    def __init__(self, row: int, col: str, text: str = ""):
        self.row = row
        self.col = col
        self.text = text
        super().__init__(f"ParseError(row={row}, col={col!r}, text={text!r})")


class TooFewRows(GpsDrfError):
    def __init__(self, n: int, needed: int):
        self.n = n
        self.needed = needed
        super().__init__(f"TooFewRows(n={n}, needed>={needed})")


class EmptyStratum(GpsDrfError):
    def __init__(self, stratum: int, size: int = 0):
        self.stratum = stratum
        self.size = size
        super().__init__(f"EmptyStratum({stratum}, size={size})")


class SingularMatrix(GpsDrfError):
    def __init__(self, rcond: float, what: str = "matrix"):
        self.rcond = rcond
        super().__init__(f"SingularMatrix({what}, rcond={rcond:.3g})")


class NonPositiveVariance(GpsDrfError):
    pass


class EmptyInput(GpsDrfError):
    pass


class ZeroExposureVariance(GpsDrfError):
    def __init__(self, stratum: int | None = None):
        self.stratum = stratum
        where = "" if stratum is None else f"stratum={stratum}"
        super().__init__(f"ZeroExposureVariance({where})")


class DegenerateFit(GpsDrfError):
    pass


class BootstrapDegenerate(GpsDrfError):
    def __init__(self, failed: int, total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"BootstrapDegenerate({failed} of {total} replicates failed)")


class DegenerateEmpiricalSd(GpsDrfError):
    pass


class ConfigError(GpsDrfError):
    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")
