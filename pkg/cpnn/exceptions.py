from typing import Optional


class CpnnError(Exception):
    """Root of every error raised on purpose by cpnn."""


class DimensionError(CpnnError, ValueError):
    """Raised when array shapes or lengths do not fit together."""


class ValidationError(CpnnError, ValueError):
    """Raised when a parameter is outside of its admissible range."""


class PreconditionError(ValidationError):
    """Raised when a characterization is invoked outside of its hypotheses."""


class AmbiguousProjectionError(ValidationError):
    """Raised when every candidate of a projection is equally close, as for the zero filter."""


class SingularInputError(CpnnError, ValueError):
    """Raised when a matrix lacks full column rank, making its polar factor non-unique."""


class NonConvergenceError(CpnnError, RuntimeError):
    """Raised when an iterative scheme exhausts its iteration cap."""


class SolverError(CpnnError, RuntimeError):
    """Raised when an inner linear solver fails."""


class ContractViolation(CpnnError, RuntimeError):
    """Raised when a caller breaks an API contract, eg. by reusing a stale tape."""


class TrainingError(CpnnError, RuntimeError):
    """Raised when training has to be aborted."""


class ParseError(CpnnError, ValueError):
    """
    Raised when a file cannot be decoded.
    >>> str(ParseError("bad magic", offset=0))
    'bad magic (at byte 0)'
    >>> str(ParseError("missing file", entry="noisy.csv"))
    "missing file (entry 'noisy.csv')"
    """

    def __init__(
        self, message: str, offset: Optional[int] = None, entry: Optional[str] = None
    ):
        self.offset: Optional[int] = offset
        self.entry: Optional[str] = entry

        if offset is not None:
            message = f"{message} (at byte {offset})"
        if entry is not None:
            message = f"{message} (entry '{entry}')"

        super().__init__(message)
