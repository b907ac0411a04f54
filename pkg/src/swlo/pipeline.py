"""Scan-to-frame preparation and the sequential/parallel frame-pair loop."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import PointCloud, estimate_normals, spherical_project
from .io import read_kitti_scan, read_labels, read_point_channel
from .odometry import (OdometryConfig, OdometryFrame, RigidTransform,
                       SolveDiagnostics, solve_frame_pair)
from .semantics import binarize_semantics

__all__ = ["ProjectionConfig", "build_frame", "run_odometry"]


@dataclass
class ProjectionConfig:
    """Range-image geometry; defaults match a 64-beam sensor."""

    height: int = 64
    width: int = 720
    fov_up: float = math.radians(3.0)
    fov_down: float = math.radians(-25.0)


def build_frame(scan_path,
                label_path=None,
                saliency_path=None,
                projection: ProjectionConfig | None = None,
                roles: dict[int, str] | None = None,
                ignore_value: float = 1.0,
                max_points: int | None = None,
                seed: int = 0) -> OdometryFrame:
    """Load a scan (plus optional channels), project it, estimate normals."""
    projection = projection or ProjectionConfig()
    cloud = read_kitti_scan(scan_path)
    if len(cloud) == 0:
        raise ValueError(f"{scan_path}: empty scan")
    channels = {}
    if label_path is not None:
        sem = read_labels(label_path)
        if len(sem) != len(cloud):
            raise ValueError(f"{label_path}: {len(sem)} labels for {len(cloud)} points")
        channels["static"] = binarize_semantics(sem, roles, ignore_value=ignore_value).values
    if saliency_path is not None:
        channels["saliency"] = read_point_channel(saliency_path, expected_count=len(cloud))

    positions = cloud.positions
    intensity = cloud.intensity
    if max_points is not None and len(cloud) > max_points:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(cloud), size=max_points, replace=False))
        positions = positions[idx]
        intensity = None if intensity is None else intensity[idx]
        channels = {name: values[idx] for name, values in channels.items()}

    cloud = PointCloud(positions=positions, intensity=intensity, channels=channels)
    image = spherical_project(cloud, projection.height, projection.width,
                              projection.fov_up, projection.fov_down)
    frame = OdometryFrame.from_range_image(image, estimate_normals(image))
    if len(frame) == 0:
        raise ValueError(f"{scan_path}: no usable points after projection")
    return frame


def run_odometry(loader: Callable[[int], OdometryFrame],
                 count: int,
                 config: OdometryConfig,
                 parallel: int = 0) -> tuple[list[RigidTransform], list[SolveDiagnostics]]:
    """Solve all consecutive frame pairs of a sequence.

    Sequential mode seeds each pair with the previous relative pose
    (constant-velocity assumption); parallel mode trades that for identity
    initialization so pairs become independent.
    """
    if count < 2:
        raise ValueError("need at least two frames")

    if parallel and parallel > 0:
        def solve_pair(k: int):
            try:
                return solve_frame_pair(loader(k), loader(k - 1), config)
            except ValueError as exc:
                raise ValueError(f"frame pair ({k - 1}, {k}): {exc}") from exc

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(solve_pair, range(1, count)))
        return [r[0] for r in results], [r[1] for r in results]

    relatives: list[RigidTransform] = []
    diagnostics: list[SolveDiagnostics] = []
    previous = loader(0)
    init = RigidTransform.identity()
    for k in range(1, count):
        current = loader(k)
        try:
            T, diag = solve_frame_pair(current, previous, config, T_init=init)
        except ValueError as exc:
            raise ValueError(f"frame pair ({k - 1}, {k}): {exc}") from exc
        relatives.append(T)
        diagnostics.append(diag)
        init = T
        previous = current
    return relatives, diagnostics
