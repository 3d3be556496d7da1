"""Exception hierarchy shared by every diskfit module.

Each exception carries a short machine-readable ``code`` and the process
``exit_code`` the command-line front end uses when it escapes a command.
"""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_IO = 4


class DiskFitError(Exception):
    code = "error"
    exit_code = EXIT_DATA


class ValidationError(DiskFitError, ValueError):
    code = "invalid_input"
    exit_code = EXIT_VALIDATION


class DimensionError(ValidationError):
    code = "image_too_small"


class DomainError(ValidationError):
    code = "domain_error"


class DegenerateHistogramError(DiskFitError):
    code = "degenerate_histogram"


class InsufficientEdgesError(DiskFitError):
    code = "insufficient_edges"


class DegenerateGeometryError(DiskFitError):
    code = "degenerate_geometry"


class PolarityMismatchError(DiskFitError):
    code = "polarity_mismatch"


class NumericalFailureError(DiskFitError):
    """Iteration produced a non-finite objective; ``last`` holds the last good iterate."""

    code = "numerical_failure"

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ClassCollapseError(DiskFitError):
    code = "class_collapse"


class PGMError(DiskFitError):
    code = "pgm_error"
    exit_code = EXIT_IO


class PGMHeaderError(PGMError):
    code = "pgm_malformed_header"


class PGMTruncatedError(PGMError):
    code = "pgm_truncated"


class PGMUnsupportedError(PGMError):
    code = "pgm_unsupported_format"


class OutputError(DiskFitError):
    code = "io_error"
    exit_code = EXIT_IO
