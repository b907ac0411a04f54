"""Image-to-point-cloud saliency transfer through a calibrated pinhole camera.

Per-point pseudo-saliency labels are produced by projecting lidar points
into one or more camera images, averaging multiple annotator maps, sampling
the fused map bilinearly, and min-max normalizing over visible points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import PointCloud, RigidTransform

__all__ = [
    "CameraModel",
    "GrayImage",
    "PointSaliency",
    "project_to_image",
    "fuse_annotators",
    "sample_saliency",
    "normalize_saliency",
    "transfer_saliency",
]

NEAR_PLANE = 0.1  # meters; points closer than this to the camera plane are dropped


@dataclass
class CameraModel:
    """Pinhole intrinsics plus the lidar-to-camera extrinsic transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int
    T_cam_from_lidar: RigidTransform

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")
        if not (0.0 <= self.cx < self.image_width and 0.0 <= self.cy < self.image_height):
            raise ValueError("principal point outside image")


@dataclass
class GrayImage:
    """Single-channel image with values in [0, 1]."""

    values: np.ndarray  # (H, W)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("gray image must be 2-D")
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite image values")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class PointSaliency:
    """Per-point saliency in [0, 1]; valid is False where no camera saw the point."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        if self.values.shape != self.valid.shape:
            raise ValueError("values/valid length mismatch")
        vals = self.values[self.valid]
        if vals.size and (not np.isfinite(vals).all() or vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("valid saliency values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.values.shape[0]


def project_to_image(cloud: PointCloud, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-point pixel coordinates plus a visibility mask.

    A point is visible iff its camera-frame depth exceeds the near plane
    and its projection (u, v) = (fx x/z + cx, fy y/z + cy) falls inside the
    image. Invisible points get pixel (0, 0) and mask False.
    """
    p_cam = cam.T_cam_from_lidar.apply(cloud.positions)
    z = p_cam[:, 2]
    visible = z > NEAR_PLANE
    z_safe = np.where(visible, z, 1.0)
    u = cam.fx * p_cam[:, 0] / z_safe + cam.cx
    v = cam.fy * p_cam[:, 1] / z_safe + cam.cy
    visible &= (u >= 0.0) & (u < cam.image_width) & (v >= 0.0) & (v < cam.image_height)
    pixels = np.stack([u, v], axis=1)
    pixels[~visible] = 0.0
    return pixels, visible


def fuse_annotators(maps: list[GrayImage]) -> GrayImage:
    """Per-pixel arithmetic mean of equally sized annotator maps."""
    if not maps:
        raise ValueError("no annotator maps")
    shape = maps[0].values.shape
    for m in maps[1:]:
        if m.values.shape != shape:
            raise ValueError(f"annotator map shape {m.values.shape} != {shape}")
    fused = np.mean(np.stack([m.values for m in maps]), axis=0)
    return GrayImage(np.clip(fused, 0.0, 1.0))


def sample_saliency(image: GrayImage, pixels: np.ndarray, mask: np.ndarray) -> PointSaliency:
    """Bilinear interpolation of an image at per-point pixel coordinates.

    Pixel centers sit at integer coordinates; the border half-pixel strip
    extrapolates with the edge value. Masked-out points get value 0 and
    valid False.
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    h, w = image.height, image.width
    u = np.clip(pixels[:, 0], 0.0, w - 1.0)
    v = np.clip(pixels[:, 1], 0.0, h - 1.0)
    j0 = np.floor(u).astype(np.int64)
    i0 = np.floor(v).astype(np.int64)
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fu = u - j0
    fv = v - i0
    img = image.values
    top = (1.0 - fu) * img[i0, j0] + fu * img[i0, j1]
    bottom = (1.0 - fu) * img[i1, j0] + fu * img[i1, j1]
    values = (1.0 - fv) * top + fv * bottom
    return PointSaliency(values=np.where(mask, values, 0.0), valid=mask.copy())


def normalize_saliency(saliency: PointSaliency) -> PointSaliency:
    """Min-max normalize over valid points; a constant map becomes all 0.5."""
    if not saliency.valid.any():
        raise ValueError("no visible points")
    vals = saliency.values[saliency.valid]
    lo, hi = float(vals.min()), float(vals.max())
    out = np.zeros_like(saliency.values)
    if hi == lo:
        out[saliency.valid] = 0.5
    else:
        out[saliency.valid] = (vals - lo) / (hi - lo)
    return PointSaliency(values=out, valid=saliency.valid.copy())


def transfer_saliency(cloud: PointCloud,
                      views: list[tuple[CameraModel, GrayImage]]) -> PointSaliency:
    """Sample one or more camera views; points seen by several cameras average."""
    if not views:
        raise ValueError("no camera views")
    sums = np.zeros(len(cloud))
    counts = np.zeros(len(cloud))
    for cam, image in views:
        pixels, visible = project_to_image(cloud, cam)
        sampled = sample_saliency(image, pixels, visible)
        sums[visible] += sampled.values[visible]
        counts[visible] += 1.0
    valid = counts > 0
    values = np.zeros(len(cloud))
    np.divide(sums, counts, out=values, where=valid)
    return PointSaliency(values=values, valid=valid)
