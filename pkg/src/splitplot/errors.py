"""Exception types shared across the package."""


class SplitPlotError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SplitPlotError):
    """Bad user input: malformed factors, infeasible sizes, unknown names."""


class NumericalError(SplitPlotError):
    """Numerical failure: singular information matrix, non-convergence."""
