"""Exception types shared across the package."""


class LiedqError(Exception):
    """Base class for all package-specific errors."""


class OutsideDomain(LiedqError):
    """A group element or algebra pair left the exponential chart.

    Raised when a logarithm is requested on the measure-zero excluded set
    (e.g. rotations by pi, -I in SU(2), trace in (-inf, -2] for SL(2,C)),
    or when exp(X)exp(Y) cannot be pulled back into the chart.
    """


class GridMismatch(LiedqError):
    """Two sampled objects disagree on model, grid or hbar."""


class SupportOverflow(LiedqError):
    """A requested bump support does not fit inside the sampled chart."""


class StencilOverflow(LiedqError):
    """A finite-difference stencil exits the sampled grid."""


class FitIllConditioned(LiedqError):
    """The hbar sample set does not determine the polynomial fit."""


class TruncationOrderInvalid(LiedqError):
    """A series truncation order is negative or exceeds the table."""


class ConfigError(LiedqError):
    """Invalid run configuration (bad model name, hbar = 0, ...)."""
