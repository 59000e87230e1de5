"""High-precision lab for Fibonacci circle maps with a flat interval."""

__version__ = "0.1.0"

from .mapcore import FlatCircleMap, FlatMapParams, validate
from .numerics import working_precision
from .renorm import renormalize
from .rotation import return_times, rotation_number, tune

__all__ = [
    "FlatCircleMap",
    "FlatMapParams",
    "renormalize",
    "return_times",
    "rotation_number",
    "tune",
    "validate",
    "working_precision",
    "__version__",
]
