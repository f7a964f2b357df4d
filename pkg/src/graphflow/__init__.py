"""Mean curvature flow of spacelike graphs in pseudo-Riemannian products (Σ₁×Σ₂, g₁ − g₂/ρ).

The flow is integrated nonparametrically on finite-difference grids, and every
run is monitored by discrete versions of the geometric identities and
maximum-principle estimates that govern it.
"""

from .errors import (CheckpointFormatError, CheckpointVersionError, ConfigError, DataError, DimensionError,
                     DomainError, GraphFlowError, InsufficientDataError, InvalidFrameError, NotSpacelikeError,
                     NumericError, NumericFailure, SpacelikeGuardError)
from .factors import FactorManifold, ProductSpace
from .discretization import Grid, JetField, MapField, jets, refinement_order
from .immersion import GraphJet, compute_geometry, graph_predicates, hyperbolic_angle
from .flow import FlowConfig, FlowTrajectory, GraphState, checkpoint_load, checkpoint_save, run, step

__version__ = "0.1.0"

__all__ = [
    "CheckpointFormatError", "CheckpointVersionError", "ConfigError", "DataError", "DimensionError",
    "DomainError", "GraphFlowError", "InsufficientDataError", "InvalidFrameError", "NotSpacelikeError",
    "NumericError", "NumericFailure", "SpacelikeGuardError",
    "FactorManifold", "ProductSpace", "Grid", "JetField", "MapField", "jets", "refinement_order",
    "GraphJet", "compute_geometry", "graph_predicates", "hyperbolic_angle",
    "FlowConfig", "FlowTrajectory", "GraphState", "checkpoint_load", "checkpoint_save", "run", "step",
]
