"""
Exception hierarchy for the STBC-MIMO LoRa toolkit
Every module raises one of these so the CLI can map failures to exit codes
"""


class StbcLoraError(Exception):
    """Base class for all toolkit errors."""


class DomainError(StbcLoraError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ValidityError(StbcLoraError, ValueError):
    """A closed-form expression was requested outside its validity region."""


class ConstructionError(StbcLoraError, ValueError):
    """A code or combining plan could not be built from the given matrix."""


class InternalError(StbcLoraError, RuntimeError):
    """A numerical routine failed in a way the caller cannot fix."""


class AccuracyError(StbcLoraError, ArithmeticError):
    """
    A numeric estimate did not reach the requested accuracy.

    Attributes:
        best_estimate: The best value reached before giving up, or None
    """

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate


class ManifestError(StbcLoraError, ValueError):
    """
    A run manifest failed validation.

    Attributes:
        diagnostics: List of (line, key, message) tuples, line is None when
                     the problem does not come from a specific line
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(_format_diagnostic(d) for d in self.diagnostics))


def _format_diagnostic(diagnostic):
    line, key, message = diagnostic
    where = f"line {line}: " if line is not None else ""
    return f"{where}{key}: {message}"
