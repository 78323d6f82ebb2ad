"""Camera projection, cylinder silhouettes and feature association under one import."""

from .association import (associate_edges, associate_points, clipped_likelihood,  # noqa: F401
                          confidence_point_likelihood, edge_costs, edge_obs_likelihood,
                          greedy_match, point_costs, point_obs_likelihood)
from .camera import (CameraModel, CylinderPrimitive, EdgeFeature, PointFeature,  # noqa: F401
                     cylinder_edges, line_in_image, normalize_line, project_cylinder_edges,
                     project_point, project_points)

__all__ = [
    "CameraModel", "CylinderPrimitive", "EdgeFeature", "PointFeature", "project_point",
    "project_points", "normalize_line", "cylinder_edges", "project_cylinder_edges",
    "line_in_image", "point_costs", "edge_costs", "greedy_match", "associate_points",
    "associate_edges", "clipped_likelihood", "point_obs_likelihood", "edge_obs_likelihood",
    "confidence_point_likelihood",
]
