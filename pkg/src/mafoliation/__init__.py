"""Monge-Ampere defining functions of contact CR hypersurfaces.

The Reeb field of a hypersurface ``V`` is flowed in complex time; inverting
the flow map gives a function ``u`` with ``u = 0`` on ``V`` whose complex
Hessian is degenerate, together with checks and diagnostics.
"""

from .cr import Hypersurface, catalog_entry, load_catalog, reeb, sample_points
from .errors import MafoliationError
from .expr import parse, parse_vector
from .foliation import FlowConfig, FoliationModel, build, leaf_chart, u_eval
from .jet import Jet

__version__ = "0.1.0"

__all__ = [
    "Hypersurface", "catalog_entry", "load_catalog", "reeb", "sample_points",
    "MafoliationError", "parse", "parse_vector", "FlowConfig", "FoliationModel",
    "build", "leaf_chart", "u_eval", "Jet",
]
