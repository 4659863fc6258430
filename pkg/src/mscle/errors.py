"""Exception types shared across the package."""


class MscleError(Exception):
    """Base class for all package-specific errors."""


class SingularInformation(MscleError):
    """Fisher information (or weighted information) matrix is singular."""


class PilotFailure(MscleError):
    """Pilot fit did not converge or the pilot sample is degenerate."""


class DegeneratePilot(MscleError):
    """Pilot normalizer is zero; sampling probabilities are undefined."""


class DegenerateRow(MscleError):
    """A selected row has a vanishing conditional-moment denominator.

    Signals a pilot/model mismatch severe enough that the bias correction
    cannot be evaluated for that row.
    """

    def __init__(self, row_index: int, message: str | None = None):
        self.row_index = int(row_index)
        super().__init__(message or f"degenerate correction term at row {row_index}")


class SingularVariance(MscleError):
    """Plug-in variance matrix is singular or not positive semidefinite."""


class DataValidationError(MscleError):
    """Input file or array failed validation; message carries the location."""
