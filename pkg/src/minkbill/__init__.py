"""Minkowski billiards in symmetric convex bodies, capacities of Lagrangian
products and volume products."""

__version__ = "0.1.0"

from .bodies import (ConvexBody, Ellipsoid, HPolytope, LpBall, PolarBody, PowerSum, VPolytope,
                     boundary_point, cross_polytope, cube, ellipsoid, find_inradius, gauge,
                     gauge_gradient, inradius_wrt, lp_ball, polar, regular_polygon, smooth,
                     support, support_point, unit_ball)
from .billiards import BilliardTrajectory, bounce_map, criticality_residual, trace
from .capacity import CapacityEstimate, hz_capacity, shortest_trajectory, two_bounce_capacity
from .config import DEFAULT_TOL, ToleranceConfig
from .paths import (antipodal_split, path_length, shortcut, simplex_cover, verify_length_bound,
                    verify_normal_length_bound)
from .volumes import mahler_volume, viterbo_ratio, volume

__all__ = [
    "ConvexBody", "Ellipsoid", "HPolytope", "LpBall", "PolarBody", "PowerSum", "VPolytope",
    "boundary_point", "cross_polytope", "cube", "ellipsoid", "find_inradius", "gauge",
    "gauge_gradient", "inradius_wrt", "lp_ball", "polar", "regular_polygon", "smooth", "support",
    "support_point", "unit_ball", "BilliardTrajectory", "bounce_map", "criticality_residual",
    "trace", "CapacityEstimate", "hz_capacity", "shortest_trajectory", "two_bounce_capacity",
    "DEFAULT_TOL", "ToleranceConfig", "antipodal_split", "path_length", "shortcut",
    "simplex_cover", "verify_length_bound", "verify_normal_length_bound", "mahler_volume",
    "viterbo_ratio", "volume",
]
