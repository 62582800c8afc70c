"""
Error types for medboot

Input problems, numerical failures and exhausted resampling are kept apart
so the CLI can map each family to its own exit code.
"""


class MedbootError(Exception):
    """Base class for all medboot errors"""


# ---------------------------------------------------------------------------
# Input errors (exit code 2)
# ---------------------------------------------------------------------------

class InputError(MedbootError, ValueError):
    """Malformed data or configuration"""


class MissingColumn(InputError):
    """A role column is not present in the CSV header"""

    def __init__(self, column: str, available=None):
        self.column = column
        self.available = list(available) if available is not None else []
        message = f"Column '{column}' not found"
        if self.available:
            message += f" (available: {', '.join(self.available)})"
        super().__init__(message)


class NonNumericCell(InputError):
    """A role column holds a value that cannot be parsed as a finite number"""

    def __init__(self, row: int, column: str, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Non-numeric value {value!r} at row {row}, column '{column}'")


class EmptyFile(InputError):
    """The input file has no data rows"""


class InvalidConfig(InputError):
    """A configuration or spec file failed validation"""


# ---------------------------------------------------------------------------
# Numerical errors (exit code 3)
# ---------------------------------------------------------------------------

class NumericalError(MedbootError, ArithmeticError):
    """A fit or statistic cannot be computed on the given data"""


class SingularDesign(NumericalError):
    """Design matrix fails the relative condition-number threshold"""


class DegenerateResponse(NumericalError):
    """Projected regressor has (near) zero second moment, or a scale is zero"""


class NonConvergence(NumericalError):
    """IRLS did not converge within max_iter"""


class SeparationSuspected(NumericalError):
    """A logistic coefficient diverged past the separation guard"""


class ProbabilityBoundary(NumericalError):
    """A plug-in probability is numerically 0 or 1"""


class GridExhausted(NumericalError):
    """No tuning value in the grid produced uniform double-bootstrap p-values"""


# ---------------------------------------------------------------------------
# Resampling (exit code 4)
# ---------------------------------------------------------------------------

class DegenerateResampling(MedbootError):
    """A bootstrap replicate kept failing after the redraw budget"""

    def __init__(self, replicate: int, attempts: int, last_error: Exception = None):
        self.replicate = replicate
        self.attempts = attempts
        self.last_error = last_error
        message = f"Replicate {replicate} degenerate after {attempts} redraws"
        if last_error is not None:
            message += f": {last_error}"
        super().__init__(message)


EXIT_CODES = {
    InputError: 2,
    NumericalError: 3,
    DegenerateResampling: 4,
}


def exit_code_for(error: Exception) -> int:
    """Map an exception to the CLI exit code (1 for anything unexpected)"""
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    return 1
