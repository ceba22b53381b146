"""Exception types shared across the package.

The CLI maps these onto exit codes: schema/parse problems are usage/io
errors (exit 2), numerical failures (collinearity, positivity, failed
searches, bad sensitivity parameters) are exit 3.
"""


class DispsensError(Exception):
    """Base class for all package errors."""


class SchemaError(DispsensError):
    """A declared column is missing, duplicated, or otherwise unusable."""


class ParseError(DispsensError):
    """A cell could not be parsed as required (carries the 1-based data row)."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(DispsensError):
    """A constructed object (generator spec, probability table) violates its invariants."""


class CollinearityError(DispsensError):
    """Design matrix is rank deficient (carries the offending column names)."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class NameLookupError(DispsensError):
    """A coefficient or group name is not present in a fit or dataset."""


class MismatchError(DispsensError):
    """Two artifacts that must come from the same data do not agree."""


class BootstrapError(DispsensError):
    """Too many bootstrap replicates were dropped to trust the covariances."""


class PositivityError(DispsensError):
    """A required nonparametric cell is empty (carries the cell description)."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DomainError(DispsensError):
    """A sensitivity parameter is outside its admissible range."""


class SearchError(DispsensError):
    """A root search could not be completed (non-monotone bracket, no sign change)."""


class DependencyError(DispsensError):
    """An operation needs an input (e.g. bootstrap covariances) that was not supplied."""
