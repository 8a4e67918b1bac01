"""Exception hierarchy shared across the package.

The CLI maps these onto its documented exit codes: configuration
problems exit 2, numerical failures exit 3, I/O and file-format
problems exit 4.
"""


class QtrajError(Exception):
    """Base class for all package errors."""


class DimensionError(QtrajError):
    """Operator/state dimension-signature mismatch or invalid dimension."""


class ConfigurationError(QtrajError):
    """Invalid parameters, config-file schema violations, unknown keys."""


class NumericalError(QtrajError):
    """Integration blow-up, step-size violations, trace/positivity drift."""


class DegenerateKernelError(NumericalError):
    """Matched filter kernel indistinguishable from zero."""


class FormatError(QtrajError):
    """Persisted-file schema/version mismatch."""


class DegenerateDistributionError(NumericalError):
    """Filtered-statistic samples have zero total variance."""
