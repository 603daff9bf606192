"""Star products, operator calculus and verification suites on T*G."""

from .errors import (
    ConfigError,
    FitIllConditioned,
    GridMismatch,
    LiedqError,
    OutsideDomain,
    StencilOverflow,
    SupportOverflow,
    TruncationOrderInvalid,
)
from .groups import make_model

__all__ = [
    "ConfigError",
    "FitIllConditioned",
    "GridMismatch",
    "LiedqError",
    "OutsideDomain",
    "StencilOverflow",
    "SupportOverflow",
    "TruncationOrderInvalid",
    "make_model",
]
