"""Saliency- and semantics-weighted LiDAR odometry toolkit."""

__version__ = "0.1.0"

from .geometry import (NormalMap, PointCloud, RangeImage, RigidTransform,
                       estimate_normals, rotate_normals, se3_exp, se3_log,
                       spherical_project, transform_cloud, unproject)
from .saliency import (CameraModel, GrayImage, PointSaliency, fuse_annotators,
                       normalize_saliency, project_to_image, sample_saliency,
                       transfer_saliency)
from .semantics import (BinaryMask, SemanticMap, binarize_semantics,
                        load_role_table, miou)
from .odometry import (Correspondences, OdometryConfig, OdometryFrame,
                       SolveDiagnostics, Trajectory, accumulate_trajectory,
                       combined_loss, compute_weights, find_correspondences,
                       normal_to_normal_loss, objective_with_gradient,
                       point_to_plane_loss, refine_pose, solve_frame_pair,
                       weighted_loss)
from .evaluation import (EvalReport, SaliencyScores, kitti_relative_errors,
                         saliency_cc, saliency_kld, saliency_sim,
                         score_saliency)

__all__ = [
    "__version__",
    "NormalMap", "PointCloud", "RangeImage", "RigidTransform",
    "estimate_normals", "rotate_normals", "se3_exp", "se3_log",
    "spherical_project", "transform_cloud", "unproject",
    "CameraModel", "GrayImage", "PointSaliency", "fuse_annotators",
    "normalize_saliency", "project_to_image", "sample_saliency",
    "transfer_saliency",
    "BinaryMask", "SemanticMap", "binarize_semantics", "load_role_table",
    "miou",
    "Correspondences", "OdometryConfig", "OdometryFrame", "SolveDiagnostics",
    "Trajectory", "accumulate_trajectory", "combined_loss", "compute_weights",
    "find_correspondences", "normal_to_normal_loss", "objective_with_gradient",
    "point_to_plane_loss", "refine_pose", "solve_frame_pair", "weighted_loss",
    "EvalReport", "SaliencyScores", "kitti_relative_errors", "saliency_cc",
    "saliency_kld", "saliency_sim", "score_saliency",
]
