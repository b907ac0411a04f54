"""Synthetic scenes and datasets for tests and experiment scripts.

Scenes are built from planar structure (ground, walls, a tilted slab) plus
an optional free-floating box acting as an independently moving object, so
ground-truth poses and analytic normals are exact.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geometry import PointCloud, RigidTransform, se3_exp
from .io import write_kitti_scan, write_labels, write_point_channel, write_poses
from .odometry import OdometryFrame, Trajectory
from .semantics import SemanticMap

__all__ = [
    "random_pose",
    "make_structured_scene",
    "make_box_surface",
    "make_two_body_scene",
    "write_synthetic_dataset",
]


def _random_unit(rng: np.random.Generator, horizontal: bool = False) -> np.ndarray:
    v = rng.normal(size=3)
    if horizontal:
        v[2] = 0.0
    n = np.linalg.norm(v)
    if n < 1e-12:
        return np.array([1.0, 0.0, 0.0])
    return v / n


def random_pose(rng: np.random.Generator, max_angle: float, max_translation: float) -> RigidTransform:
    """Uniform random axis, angle <= max_angle, |t| <= max_translation."""
    axis = _random_unit(rng)
    angle = rng.uniform(0.0, max_angle)
    rot = se3_exp(np.concatenate([axis * angle, np.zeros(3)]))
    t = _random_unit(rng) * rng.uniform(0.0, max_translation)
    return RigidTransform(rot.quaternion, t)


def _plane_patch(rng, n, origin, tangent_a, tangent_b, extent_a, extent_b, normal):
    a = rng.uniform(-extent_a, extent_a, size=n)
    b = rng.uniform(-extent_b, extent_b, size=n)
    pos = origin + a[:, None] * tangent_a + b[:, None] * tangent_b
    nrm = np.tile(normal / np.linalg.norm(normal), (n, 1))
    return pos, nrm


def make_structured_scene(rng: np.random.Generator, n_points: int = 5000):
    """(positions, normals) over ground, two walls, a tilted slab, and a blob."""
    n_ground = int(0.4 * n_points)
    n_wall = int(0.2 * n_points)
    n_tilt = int(0.1 * n_points)
    n_blob = n_points - n_ground - 2 * n_wall - n_tilt

    parts = [
        _plane_patch(rng, n_ground, np.array([0.0, 0.0, -1.7]),
                     np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                     25.0, 25.0, np.array([0.0, 0.0, 1.0])),
        _plane_patch(rng, n_wall, np.array([18.0, 0.0, 1.0]),
                     np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]),
                     20.0, 2.5, np.array([-1.0, 0.0, 0.0])),
        _plane_patch(rng, n_wall, np.array([0.0, -15.0, 1.0]),
                     np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]),
                     18.0, 2.5, np.array([0.0, 1.0, 0.0])),
        _plane_patch(rng, n_tilt, np.array([-5.0, 18.0, 1.0]),
                     np.array([1.0, 0.0, 0.35]), np.array([0.0, 1.0, 0.2]),
                     8.0, 6.0, np.array([-0.35, -0.2, 1.0])),
    ]
    blob_pos = rng.uniform([-20.0, -12.0, -1.0], [14.0, 20.0, 3.5], size=(n_blob, 3))
    blob_nrm = np.stack([_random_unit(rng) for _ in range(n_blob)])
    parts.append((blob_pos, blob_nrm))

    positions = np.vstack([p for p, _ in parts])
    normals = np.vstack([n for _, n in parts])
    return positions, normals


def make_box_surface(rng: np.random.Generator, center, half, n: int):
    """(positions, normals) sampled on the faces of an axis-aligned box."""
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(half, dtype=np.float64)
    face = rng.integers(0, 6, size=n)
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    offsets = rng.uniform(-1.0, 1.0, size=(n, 3)) * half
    normals = np.zeros((n, 3))
    for i in range(n):
        offsets[i, axis[i]] = sign[i] * half[axis[i]]
        normals[i, axis[i]] = sign[i]
    return center + offsets, normals


def make_two_body_scene(rng: np.random.Generator,
                        n_points: int = 1500,
                        dynamic_fraction: float = 0.2,
                        T_true: RigidTransform | None = None,
                        dynamic_shift: float = 1.0,
                        max_angle: float = math.radians(2.0),
                        max_translation: float = 0.5):
    """Static structure plus an independently translated box cluster.

    Returns (src, tgt, T_true): tgt holds the static points moved by T_true
    and the box points moved by T_true after an own-motion shift. Masks are
    exact (static 1, box 0) and saliency is all ones.
    """
    n_dyn = int(round(dynamic_fraction * n_points))
    static_pos, static_nrm = make_structured_scene(rng, n_points - n_dyn)
    dyn_pos, dyn_nrm = make_box_surface(rng, center=(10.0, -6.0, 0.0),
                                        half=(0.8, 0.8, 0.5), n=n_dyn)
    if T_true is None:
        T_true = random_pose(rng, max_angle, max_translation)
    shift = _random_unit(rng, horizontal=True) * dynamic_shift

    mask = np.concatenate([np.ones(len(static_pos)), np.zeros(n_dyn)])
    src = OdometryFrame(
        positions=np.vstack([static_pos, dyn_pos]),
        normals=np.vstack([static_nrm, dyn_nrm]),
        static=mask,
    )
    tgt = OdometryFrame(
        positions=np.vstack([T_true.apply(static_pos), T_true.apply(dyn_pos + shift)]),
        normals=np.vstack([T_true.rotate(static_nrm), T_true.rotate(dyn_nrm)]),
        static=mask.copy(),
    )
    return src, tgt, T_true


def write_synthetic_dataset(out_dir,
                            n_frames: int = 3,
                            n_points: int = 12000,
                            dynamic_fraction: float = 0.2,
                            step: float = 0.25,
                            dynamic_step: float = 0.5,
                            seed: int = 0) -> dict[str, Path]:
    """Write a KITTI-layout sequence with scans, labels, saliency, and poses.

    A fixed world point set is observed from a sensor advancing `step`
    meters per frame while a box object drifts `dynamic_step` meters per
    frame on its own. Ground points are labeled road (40), other structure
    building (50), and the box car (10).
    """
    out = Path(out_dir)
    scan_dir = out / "scans"
    label_dir = out / "labels"
    saliency_dir = out / "saliency"
    for d in (scan_dir, label_dir, saliency_dir):
        d.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    n_dyn = int(round(dynamic_fraction * n_points))
    static_pos, _ = make_structured_scene(rng, n_points - n_dyn)
    dyn_pos, _ = make_box_surface(rng, center=(12.0, -5.0, 0.0),
                                  half=(0.9, 0.9, 0.5), n=n_dyn)
    ground = np.abs(static_pos[:, 2] + 1.7) < 1e-6
    labels = np.concatenate([np.where(ground, 40, 50), np.full(n_dyn, 10)])
    shift_dir = _random_unit(rng, horizontal=True)

    poses = []
    for k in range(n_frames):
        pose = RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]),
                              np.array([step * k, 0.0, 0.0]))
        poses.append(pose)
        inv = pose.inverse()
        dyn_world = dyn_pos + (dynamic_step * k) * shift_dir
        pts = np.vstack([inv.apply(static_pos), inv.apply(dyn_world)])
        cloud = PointCloud(positions=pts, intensity=np.full(len(pts), 0.5))
        write_kitti_scan(cloud, scan_dir / f"{k:06d}.bin")
        write_labels(SemanticMap(labels=labels), label_dir / f"{k:06d}.label")
        write_point_channel(np.ones(len(pts)), saliency_dir / f"{k:06d}.ptch")

    pose_file = out / "poses_gt.txt"
    write_poses(Trajectory(poses=poses), pose_file)
    return {"scans": scan_dir, "labels": label_dir, "saliency": saliency_dir,
            "poses": pose_file}
