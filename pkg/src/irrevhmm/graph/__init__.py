"""Reeb-graph geometry of 2D potentials."""

from .coefficients import (
    EdgeCoefficients,
    GluingWeights,
    chebyshev_energies,
    edge_coefficients,
    gluing_probabilities,
)
from .contour import ContourError, LevelCurveExtractor, NearCriticalWarning, contour_integral, contour_integrals
from .critical import ConditionViolation, CriticalPoint, find_critical_points
from .reeb import UNRESOLVED, Edge, ReebGraph, Vertex, build_reeb_graph, project
from .transitions import TransitionCounter, TransitionCounts, count_transitions

__all__ = [
    "ConditionViolation",
    "ContourError",
    "CriticalPoint",
    "Edge",
    "EdgeCoefficients",
    "GluingWeights",
    "LevelCurveExtractor",
    "NearCriticalWarning",
    "ReebGraph",
    "TransitionCounter",
    "TransitionCounts",
    "UNRESOLVED",
    "Vertex",
    "build_reeb_graph",
    "chebyshev_energies",
    "contour_integral",
    "contour_integrals",
    "count_transitions",
    "edge_coefficients",
    "find_critical_points",
    "gluing_probabilities",
    "project",
]
