"""Deformation quantization in arbitrary canonical charts.

Star products from the Fedosov recursion, the Moyal product on grids,
Wigner functions and their purity tests, and the harmonic oscillator in
time-energy coordinates.
"""
from .charts import ChartMap, get_chart
from .connection import (SymplecticConnection, curvature, flat_connection_in_chart,
                         transform_connection)
from .errors import (DomainError, FedosovKitError, FlatnessError, GradingError, GridError,
                     NonCanonicalError, NormalizationError, NotPureError, OpaqueDerivativeError,
                     ParseError, UnknownVariableError)
from .fedosov import FedosovContext, fedosov_lift, moyal_bracket, star_product
from .grid import GridFunction
from .prefix import parse, to_prefix
from .symbolic import HBAR, ComplexExpr, expr_equal, sym

__version__ = "0.1.0"

__all__ = [
    "ChartMap", "ComplexExpr", "DomainError", "FedosovContext", "FedosovKitError",
    "FlatnessError", "GradingError", "GridError", "GridFunction", "HBAR", "NonCanonicalError",
    "NormalizationError", "NotPureError", "OpaqueDerivativeError", "ParseError",
    "SymplecticConnection", "UnknownVariableError", "curvature", "expr_equal",
    "fedosov_lift", "flat_connection_in_chart", "get_chart", "moyal_bracket", "parse",
    "star_product", "sym", "to_prefix", "transform_connection",
]
