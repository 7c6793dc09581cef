"""Model monitoring: capture, baselines, drift, quality, bias, and scheduling."""

__version__ = "0.1.0"

from .errors import InsufficientDataError, ParseError, UndefinedMetricError

__all__ = ["InsufficientDataError", "ParseError", "UndefinedMetricError", "__version__"]
