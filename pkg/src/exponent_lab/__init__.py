"""Scaling-exponent laboratory for rooted conductance networks."""

__version__ = "0.1.0"

from .errors import (EstimationError, ExponentLabError, NumericalError,
                     ResourceError, TruncationError, ValidationError)
from .network import Annulus, EdgeWeight, Network, graph_ball, volume, \
    weighted_distance, truncate_to_ball

__all__ = [
    "__version__",
    "Annulus", "EdgeWeight", "Network",
    "graph_ball", "volume", "weighted_distance", "truncate_to_ball",
    "ExponentLabError", "ValidationError", "NumericalError",
    "TruncationError", "ResourceError", "EstimationError",
]
