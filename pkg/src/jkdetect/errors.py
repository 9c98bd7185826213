"""Exception types shared across the package."""


class JkDetectError(Exception):
    """Base class for package errors."""


class DegenerateGeometryError(JkDetectError):
    """Measurement geometry cannot support a least-squares solution."""


class SubsetDegenerateError(DegenerateGeometryError):
    """A leave-one-out subset is unsolvable; carries the excluded index."""

    def __init__(self, k: int, message: str | None = None):
        self.k = k
        super().__init__(message or f"subset excluding measurement {k} is degenerate")


class FitDegenerateError(JkDetectError):
    """An overbound fit collapsed (zero spread or vanishing component)."""


class PartitionFailureError(JkDetectError):
    """Mixture components never cross, so no core/tail partition exists."""


class ScenarioParseError(JkDetectError):
    """A replay CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")
