"""Statics of clustered tensegrity structures whose strings run over finite-radius pulleys."""

from .model import (Attachment, Member, ModelError, PhysicalNode, Segment, StructureModel,
                    TopologySet, build_topology, expand_side_signs, partition_dofs)
from .geometry import GeometryError, GeometryState, PulleyOverlap, evaluate_geometry
from .statics import StaticsState, evaluate_statics
from .solver import Schedule, SolveConfig, SolveResult, solve_equilibrium, stepped_solve
from .analysis import radius_sweep, stiffness_spectrum, svd_modes

__version__ = "0.1.0"

__all__ = [
    "Attachment", "Member", "ModelError", "PhysicalNode", "Segment", "StructureModel",
    "TopologySet", "build_topology", "expand_side_signs", "partition_dofs",
    "GeometryError", "GeometryState", "PulleyOverlap", "evaluate_geometry",
    "StaticsState", "evaluate_statics", "Schedule", "SolveConfig", "SolveResult",
    "solve_equilibrium", "stepped_solve", "radius_sweep", "stiffness_spectrum", "svd_modes",
]
