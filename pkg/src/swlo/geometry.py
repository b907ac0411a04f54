"""Point clouds, spherical range images, surface normals, and SE(3) transforms.

Conventions: right-handed sensor frame with x forward, y left, z up.
Rotations are stored as unit quaternions (w, x, y, z). se(3) tangent
vectors are ordered (omega, v), rotation block first, and increments are
applied on the left: T_new = exp(delta) o T_old.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PointCloud",
    "RangeImage",
    "NormalMap",
    "RigidTransform",
    "spherical_project",
    "unproject",
    "estimate_normals",
    "transform_cloud",
    "rotate_normals",
    "se3_exp",
    "se3_log",
]


@dataclass
class PointCloud:
    """N points with Cartesian coordinates plus optional per-point scalars.

    ``channels`` holds named per-point arrays (e.g. "saliency", "static")
    that survive projection and rigid transforms unchanged.
    """

    positions: np.ndarray
    intensity: np.ndarray | None = None
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.positions).all():
            raise ValueError("invalid point: non-finite coordinates")
        n = len(self)
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if self.intensity.shape[0] != n:
                raise ValueError(f"intensity length {self.intensity.shape[0]} != point count {n}")
        cleaned = {}
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=np.float64).reshape(-1)
            if values.shape[0] != n:
                raise ValueError(f"channel '{name}' length {values.shape[0]} != point count {n}")
            cleaned[name] = values
        self.channels = cleaned

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass
class RangeImage:
    """Spherical projection grid of a scan.

    ``range`` is 0 exactly where ``valid`` is False; where valid, ``xyz``
    stores the winning point's coordinates and ``range`` its Euclidean norm.
    """

    range: np.ndarray                  # (H, W) meters
    xyz: np.ndarray                    # (H, W, 3) meters
    valid: np.ndarray                  # (H, W) bool
    channels: dict[str, np.ndarray] = field(default_factory=dict)
    fov_up: float = math.radians(3.0)
    fov_down: float = math.radians(-25.0)

    def __post_init__(self):
        self.range = np.asarray(self.range, dtype=np.float64)
        self.xyz = np.asarray(self.xyz, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        h, w = self.range.shape
        if self.xyz.shape != (h, w, 3) or self.valid.shape != (h, w):
            raise ValueError("range/xyz/valid shape mismatch")
        self.channels = {k: np.asarray(v, dtype=np.float64) for k, v in self.channels.items()}
        for name, plane in self.channels.items():
            if plane.shape != (h, w):
                raise ValueError(f"channel '{name}' shape {plane.shape} != {(h, w)}")
        if np.any(self.range[~self.valid] != 0.0):
            raise ValueError("invalid pixels must carry range 0")
        r = self.range[self.valid]
        if np.any(r <= 0.0):
            raise ValueError("valid pixels must carry positive range")
        norms = np.linalg.norm(self.xyz[self.valid], axis=-1)
        if np.any(np.abs(norms - r) > 1e-4 * r):
            raise ValueError("xyz norm inconsistent with stored range")

    @property
    def height(self) -> int:
        return self.range.shape[0]

    @property
    def width(self) -> int:
        return self.range.shape[1]


@dataclass
class NormalMap:
    """Per-pixel unit surface normals aligned with a RangeImage grid."""

    normals: np.ndarray                # (H, W, 3)
    valid: np.ndarray                  # (H, W) bool

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.normals.shape[:2] != self.valid.shape or self.normals.shape[-1] != 3:
            raise ValueError("normals/valid shape mismatch")
        norms = np.linalg.norm(self.normals[self.valid], axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("valid normals must be unit length")


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def _quat_from_rotmat(m: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the numerically largest pivot.
    t = np.trace(m)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        return np.array([0.25 * s,
                         (m[2, 1] - m[1, 2]) / s,
                         (m[0, 2] - m[2, 0]) / s,
                         (m[1, 0] - m[0, 1]) / s])
    if m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        return np.array([(m[2, 1] - m[1, 2]) / s,
                         0.25 * s,
                         (m[0, 1] + m[1, 0]) / s,
                         (m[0, 2] + m[2, 0]) / s])
    if m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        return np.array([(m[0, 2] - m[2, 0]) / s,
                         (m[0, 1] + m[1, 0]) / s,
                         0.25 * s,
                         (m[1, 2] + m[2, 1]) / s])
    s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
    return np.array([(m[1, 0] - m[0, 1]) / s,
                     (m[0, 2] + m[2, 0]) / s,
                     (m[1, 2] + m[2, 1]) / s,
                     0.25 * s])


@dataclass
class RigidTransform:
    """SE(3) pose: unit quaternion (w, x, y, z) plus translation in meters.

    The quaternion is renormalized on construction, so composing many
    transforms never drifts off the group.
    """

    quaternion: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=np.float64).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("degenerate quaternion")
        self.quaternion = q / n
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(self.translation).all():
            raise ValueError("non-finite translation")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        """Build from a 3x4 or 4x4 [R|t] matrix.

        The rotation block must be orthonormal within 1e-3 with positive
        determinant; it is projected onto SO(3) before quaternion extraction.
        """
        m = np.asarray(m, dtype=np.float64)
        if m.shape == (4, 4):
            m = m[:3, :]
        if m.shape != (3, 4):
            raise ValueError(f"expected 3x4 or 4x4 matrix, got {m.shape}")
        r = m[:, :3]
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-3 or np.linalg.det(r) <= 0.0:
            raise ValueError("invalid rotation")
        u, _, vt = np.linalg.svd(r)
        d = np.sign(np.linalg.det(u @ vt))
        r = u @ np.diag([1.0, 1.0, d]) @ vt
        return cls(_quat_from_rotmat(r), m[:, 3])

    @property
    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.quaternion
        return np.array([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.translation
        return m

    @property
    def matrix3x4(self) -> np.ndarray:
        return self.matrix[:3, :]

    def apply(self, points: np.ndarray) -> np.ndarray:
        """R p + t for a single 3-vector or an (N, 3) array."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation_matrix.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """R v, ignoring translation (normals, directions)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation_matrix.T

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        """Composition: (a @ b).apply(p) == a.apply(b.apply(p))."""
        q = _quat_mul(self.quaternion, other.quaternion)
        t = self.rotate(other.translation) + self.translation
        return RigidTransform(q, t)

    def inverse(self) -> "RigidTransform":
        qc = self.quaternion * np.array([1.0, -1.0, -1.0, -1.0])
        return RigidTransform(qc, -(self.rotation_matrix.T @ self.translation))

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians, in [0, pi]."""
        w = abs(float(self.quaternion[0]))
        s = float(np.linalg.norm(self.quaternion[1:]))
        return 2.0 * math.atan2(s, w)


def _hat(w: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def se3_exp(xi: np.ndarray) -> RigidTransform:
    """Exponential map of a twist xi = (omega, v).

    Rodrigues' rotation with the coupling matrix V applied to v; the
    small-angle branch (|omega| < 1e-8) uses second-order Taylor series.
    """
    xi = np.asarray(xi, dtype=np.float64).reshape(6)
    if not np.isfinite(xi).all():
        raise ValueError("non-finite twist")
    w, v = xi[:3], xi[3:]
    th = float(np.linalg.norm(w))
    k = _hat(w)
    k2 = k @ k
    if th < 1e-8:
        quat = np.concatenate([[1.0 - th * th / 8.0], 0.5 * (1.0 - th * th / 24.0) * w])
        vmat = np.eye(3) + 0.5 * k + k2 / 6.0
    else:
        quat = np.concatenate([[math.cos(0.5 * th)], (math.sin(0.5 * th) / th) * w])
        vmat = (np.eye(3)
                + ((1.0 - math.cos(th)) / th ** 2) * k
                + ((th - math.sin(th)) / th ** 3) * k2)
    return RigidTransform(quat, vmat @ v)


def se3_log(transform: RigidTransform) -> np.ndarray:
    """Inverse of se3_exp; valid for rotation angles below pi - 1e-6."""
    q = transform.quaternion
    if q[0] < 0.0:
        q = -q
    s = float(np.linalg.norm(q[1:]))
    th = 2.0 * math.atan2(s, float(q[0]))
    if th >= math.pi - 1e-6:
        raise ValueError("rotation near log singularity")
    if th < 1e-8:
        w = 2.0 * q[1:] * (1.0 + th * th / 24.0)
        k = _hat(w)
        vinv = np.eye(3) - 0.5 * k + (k @ k) / 12.0
    else:
        w = (th / s) * q[1:]
        k = _hat(w)
        coeff = 1.0 / th ** 2 - (1.0 + math.cos(th)) / (2.0 * th * math.sin(th))
        vinv = np.eye(3) - 0.5 * k + coeff * (k @ k)
    return np.concatenate([w, vinv @ transform.translation])


def spherical_project(cloud: PointCloud,
                      height: int = 64,
                      width: int = 720,
                      fov_up: float = math.radians(3.0),
                      fov_down: float = math.radians(-25.0)) -> RangeImage:
    """Project a cloud onto an equiangular range image.

    Pixel mapping: u = floor(0.5 (1 - atan2(y, x)/pi) W) and
    v = floor((1 - (asin(z/r) - fov_down)/(fov_up - fov_down)) H), both
    clamped to the grid. On collisions the nearer point wins. All cloud
    channels (and intensity) are carried into image planes.
    """
    if height < 2 or width < 2:
        raise ValueError("range image needs at least 2x2 pixels")
    if not fov_up > fov_down:
        raise ValueError("fov_up must exceed fov_down")
    if len(cloud) == 0:
        raise ValueError("empty input")
    pos = cloud.positions
    if not np.isfinite(pos).all():
        raise ValueError("invalid point: non-finite coordinates")

    r = np.linalg.norm(pos, axis=1)
    kept = np.nonzero(r > 1e-9)[0]          # points at the origin have no direction
    yaw = np.arctan2(pos[kept, 1], pos[kept, 0])
    pitch = np.arcsin(np.clip(pos[kept, 2] / r[kept], -1.0, 1.0))
    u = np.floor(0.5 * (1.0 - yaw / np.pi) * width).astype(np.int64)
    v = np.floor((1.0 - (pitch - fov_down) / (fov_up - fov_down)) * height).astype(np.int64)
    u = np.clip(u, 0, width - 1)
    v = np.clip(v, 0, height - 1)

    # One winner per pixel: sort by (pixel, range) and keep the first entry.
    pix = v * width + u
    order = np.lexsort((r[kept], pix))
    first = np.ones(order.size, dtype=bool)
    first[1:] = pix[order][1:] != pix[order][:-1]
    winner = kept[order[first]]
    vv, uu = v[order[first]], u[order[first]]

    range_plane = np.zeros((height, width))
    xyz = np.zeros((height, width, 3))
    valid = np.zeros((height, width), dtype=bool)
    range_plane[vv, uu] = r[winner]
    xyz[vv, uu] = pos[winner]
    valid[vv, uu] = True

    channels = {}
    source = dict(cloud.channels)
    if cloud.intensity is not None:
        source["intensity"] = cloud.intensity
    for name, values in source.items():
        plane = np.zeros((height, width))
        plane[vv, uu] = values[winner]
        channels[name] = plane

    return RangeImage(range=range_plane, xyz=xyz, valid=valid, channels=channels,
                      fov_up=fov_up, fov_down=fov_down)


def unproject(image: RangeImage) -> PointCloud:
    """One point per valid pixel, carrying that pixel's xyz and channels."""
    mask = image.valid
    positions = image.xyz[mask].copy()
    channels = {name: plane[mask].copy() for name, plane in image.channels.items()}
    intensity = channels.pop("intensity", None)
    return PointCloud(positions=positions, intensity=intensity, channels=channels)


def estimate_normals(image: RangeImage) -> NormalMap:
    """Surface normals from right/down neighbor cross products.

    Each normal is oriented to face the sensor at the origin (n . xyz < 0).
    Pixels lacking valid neighbors, or with a degenerate cross product,
    are marked invalid.
    """
    h, w = image.range.shape
    normals = np.zeros((h, w, 3))
    valid = np.zeros((h, w), dtype=bool)

    center = image.xyz[:-1, :-1]
    right = image.xyz[:-1, 1:]
    down = image.xyz[1:, :-1]
    ok = image.valid[:-1, :-1] & image.valid[:-1, 1:] & image.valid[1:, :-1]

    cross = np.cross(right - center, down - center)
    norm = np.linalg.norm(cross, axis=-1)
    ok = ok & (norm >= 1e-12)

    n = np.zeros_like(cross)
    np.divide(cross, norm[..., None], out=n, where=ok[..., None])
    flip = (np.einsum("ijk,ijk->ij", n, center) > 0.0) & ok
    n[flip] *= -1.0

    normals[:-1, :-1][ok] = n[ok]
    valid[:-1, :-1] = ok
    return NormalMap(normals=normals, valid=valid)


def transform_cloud(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Rigidly move a cloud; channels are copied unchanged."""
    return PointCloud(
        positions=transform.apply(cloud.positions),
        intensity=None if cloud.intensity is None else cloud.intensity.copy(),
        channels={name: values.copy() for name, values in cloud.channels.items()},
    )


def rotate_normals(normal_map: NormalMap, transform: RigidTransform) -> NormalMap:
    """Rotate a normal map by the rotation part of a transform."""
    return NormalMap(
        normals=normal_map.normals @ transform.rotation_matrix.T,
        valid=normal_map.valid.copy(),
    )
