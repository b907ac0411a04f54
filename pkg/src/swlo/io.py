"""Readers and writers for every on-disk format the toolkit touches.

Formats:
  - scans: little-endian float32 records (x, y, z, intensity), 16 bytes/point
  - labels: little-endian uint32 per point, semantic class in the low 16 bits
  - point channels: "PTCH" magic, uint32 version, uint64 count, float32 data
  - poses: 12 whitespace-separated numbers per line, row-major 3x4 [R|t]
  - saliency images: binary PGM (P5), maxval 255
  - calibration: KITTI calib.txt with P*/Tr entries
  - plots: deterministic SVG polyline overlays
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .geometry import PointCloud, RigidTransform
from .odometry import Trajectory
from .saliency import CameraModel, GrayImage
from .semantics import SEMANTIC_KITTI_NAMES, SemanticMap

__all__ = [
    "read_kitti_scan",
    "write_kitti_scan",
    "read_poses",
    "write_poses",
    "read_labels",
    "write_labels",
    "read_point_channel",
    "write_point_channel",
    "read_pgm",
    "write_pgm",
    "read_kitti_calib",
    "camera_from_calib",
    "DatasetLayout",
    "TrajectoryCurve",
    "write_trajectory_svg",
]

CHANNEL_MAGIC = b"PTCH"
CHANNEL_VERSION = 1


def read_kitti_scan(path) -> PointCloud:
    """Load a .bin scan of float32 (x, y, z, intensity) records."""
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise ValueError(f"malformed scan {path}: size {len(raw)} not divisible by 16")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return PointCloud(positions=data[:, :3].astype(np.float64),
                      intensity=data[:, 3].astype(np.float64))


def write_kitti_scan(cloud: PointCloud, path) -> None:
    intensity = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    data = np.concatenate([cloud.positions, intensity[:, None]], axis=1).astype("<f4")
    Path(path).write_bytes(data.tobytes())


def read_poses(path) -> Trajectory:
    """Load a KITTI pose file: one row-major 3x4 world-from-frame matrix per line."""
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            tokens = line.split()
            if len(tokens) != 12:
                raise ValueError(f"pose line {lineno}: expected 12 values, got {len(tokens)}")
            try:
                values = np.array([float(t) for t in tokens]).reshape(3, 4)
            except ValueError as exc:
                raise ValueError(f"pose line {lineno}: {exc}") from exc
            try:
                poses.append(RigidTransform.from_matrix(values))
            except ValueError as exc:
                raise ValueError(f"pose line {lineno}: {exc}") from exc
    if not poses:
        raise ValueError(f"empty pose file {path}")
    return Trajectory(poses=poses)


def write_poses(traj: Trajectory, path) -> None:
    """Write poses with 9 significant digits (round trip within 1e-8 per entry)."""
    lines = []
    for pose in traj.poses:
        flat = pose.matrix3x4.reshape(-1)
        lines.append(" ".join(f"{v:.8e}" for v in flat))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels(path, label_names: dict[int, str] | None = None) -> SemanticMap:
    """Load a .label file; the upper 16 instance bits are discarded."""
    raw = Path(path).read_bytes()
    if len(raw) % 4 != 0:
        offset = len(raw) - len(raw) % 4
        raise ValueError(f"malformed label file {path}: truncated record at offset {offset}")
    packed = np.frombuffer(raw, dtype="<u4")
    labels = (packed & 0xFFFF).astype(np.int64)
    names = dict(SEMANTIC_KITTI_NAMES) if label_names is None else label_names
    return SemanticMap(labels=labels, label_names=names)


def write_labels(sem: SemanticMap, path) -> None:
    """Write semantic-only labels (instance bits zero)."""
    if sem.labels.size and sem.labels.max() > 0xFFFF:
        raise ValueError("semantic label exceeds 16 bits")
    Path(path).write_bytes(sem.labels.astype("<u4").tobytes())


def read_point_channel(path, expected_count: int | None = None) -> np.ndarray:
    """Load a PTCH per-point scalar channel; values must be finite."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"truncated channel file {path}: header needs 16 bytes, got {len(raw)}")
    magic = raw[:4]
    if magic != CHANNEL_MAGIC:
        raise ValueError(f"bad channel magic in {path}: {magic!r}")
    version, count = struct.unpack("<IQ", raw[4:16])
    if version != CHANNEL_VERSION:
        raise ValueError(f"unsupported channel version {version} in {path}")
    payload = raw[16:]
    if len(payload) != count * 4:
        raise ValueError(f"truncated channel file {path} at offset {16 + len(payload)}: "
                         f"expected {count} float32 values")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.isfinite(values).all():
        raise ValueError(f"non-finite channel value in {path}")
    if expected_count is not None and count != expected_count:
        raise ValueError(f"channel count {count} != scan point count {expected_count} ({path})")
    return values


def write_point_channel(values: np.ndarray, path) -> None:
    values = np.asarray(values, dtype="<f4").reshape(-1)
    if not np.isfinite(values).all():
        raise ValueError("non-finite channel value")
    header = CHANNEL_MAGIC + struct.pack("<IQ", CHANNEL_VERSION, values.size)
    Path(path).write_bytes(header + values.tobytes())


def _pgm_tokens(raw: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` header tokens plus the offset one byte past the last one."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        while i < len(raw) and raw[i:i + 1].isspace():
            i += 1
        if i < len(raw) and raw[i:i + 1] == b"#":
            while i < len(raw) and raw[i:i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(raw) and not raw[i:i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("truncated PGM header")
        tokens.append(raw[start:i])
    return tokens, i + 1  # skip the single whitespace byte after the last token


def read_pgm(path) -> GrayImage:
    """Load a binary PGM (P5, maxval 255) as values in [0, 1]."""
    raw = Path(path).read_bytes()
    try:
        tokens, offset = _pgm_tokens(raw, 4)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    expected = width * height
    data = raw[offset:offset + expected]
    if len(data) != expected:
        raise ValueError(f"truncated PGM {path} at offset {offset + len(data)}: "
                         f"expected {expected} pixels")
    values = np.frombuffer(data, dtype=np.uint8).reshape(height, width) / 255.0
    return GrayImage(values)


def write_pgm(image: GrayImage, path) -> None:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    pixels = np.round(image.values * 255.0).astype(np.uint8)
    Path(path).write_bytes(header + pixels.tobytes())


def read_kitti_calib(path) -> dict[str, np.ndarray]:
    """Parse calib.txt lines of `NAME: v0 v1 ... v11` into 3x4 matrices."""
    entries: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            if ":" not in line:
                raise ValueError(f"calib line {lineno}: missing ':'")
            name, rest = line.split(":", 1)
            values = rest.split()
            if len(values) != 12:
                raise ValueError(f"calib line {lineno}: expected 12 values, got {len(values)}")
            entries[name.strip()] = np.array([float(v) for v in values]).reshape(3, 4)
    if not entries:
        raise ValueError(f"empty calib file {path}")
    return entries


def camera_from_calib(calib: dict[str, np.ndarray],
                      image_width: int, image_height: int,
                      camera: str = "P2", extrinsic: str = "Tr") -> CameraModel:
    """Build a pinhole model from projection matrix P and lidar-to-camera Tr.

    The fourth column of P is folded into the extrinsics as the camera-frame
    offset K^-1 p4, which reproduces u = (P row0 . X)/(P row2 . X) exactly.
    """
    if camera not in calib:
        raise ValueError(f"calibration entry {camera!r} missing")
    if extrinsic not in calib:
        raise ValueError(f"calibration entry {extrinsic!r} missing")
    p = calib[camera]
    k = p[:, :3]
    offset = np.linalg.solve(k, p[:, 3])
    shift = RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), offset)
    T_cam_from_lidar = shift @ RigidTransform.from_matrix(calib[extrinsic])
    return CameraModel(fx=float(k[0, 0]), fy=float(k[1, 1]),
                       cx=float(k[0, 2]), cy=float(k[1, 2]),
                       image_width=image_width, image_height=image_height,
                       T_cam_from_lidar=T_cam_from_lidar)


@dataclass
class DatasetLayout:
    """Directory layout of one sequence; file order is lexicographic."""

    scan_dir: Path
    label_dir: Path | None = None
    saliency_dir: Path | None = None
    calib_file: Path | None = None
    pose_file: Path | None = None

    @classmethod
    def kitti(cls, root, sequence: str) -> "DatasetLayout":
        root = Path(root)
        seq = root / "sequences" / sequence
        label_dir = seq / "labels"
        pose_file = root / "poses" / f"{sequence}.txt"
        return cls(scan_dir=seq / "velodyne",
                   label_dir=label_dir if label_dir.is_dir() else None,
                   saliency_dir=None,
                   calib_file=(seq / "calib.txt") if (seq / "calib.txt").is_file() else None,
                   pose_file=pose_file if pose_file.is_file() else None)

    def scan_files(self) -> list[Path]:
        files = sorted(Path(self.scan_dir).glob("*.bin"))
        if not files:
            raise ValueError(f"no scans in {self.scan_dir}")
        return files

    def label_files(self) -> list[Path] | None:
        if self.label_dir is None:
            return None
        return sorted(Path(self.label_dir).glob("*.label"))

    def saliency_files(self) -> list[Path] | None:
        if self.saliency_dir is None:
            return None
        return sorted(Path(self.saliency_dir).glob("*.ptch"))

    def check_consistency(self) -> int:
        """Return the frame count; per-point channels must match it 1:1."""
        n = len(self.scan_files())
        labels = self.label_files()
        if labels is not None and len(labels) != n:
            raise ValueError(f"{len(labels)} label files for {n} scans")
        saliency = self.saliency_files()
        if saliency is not None and len(saliency) != n:
            raise ValueError(f"{len(saliency)} saliency files for {n} scans")
        return n


@dataclass
class TrajectoryCurve:
    label: str
    xy: np.ndarray                     # (N, 2) plotted plane coordinates
    color: str | None = None
    dashed: bool = False

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        if self.xy.shape[0] < 1:
            raise ValueError("curve needs at least one point")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _nice_step(span: float) -> float:
    raw = span / 5.0
    mag = 10.0 ** np.floor(np.log10(raw))
    frac = raw / mag
    for nice in (1.0, 2.0, 5.0):
        if frac <= nice:
            return nice * mag
    return 10.0 * mag


def _ticks(lo: float, hi: float) -> list[float]:
    step = _nice_step(hi - lo)
    first = np.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(round(v, 9) + 0.0)   # normalize -0.0
        v += step
    return out


def write_trajectory_svg(path, curves: list[TrajectoryCurve],
                         width: int = 800, height: int = 640) -> None:
    """Equal-aspect polyline overlay with axis ticks; output is deterministic."""
    if not curves:
        raise ValueError("nothing to plot")
    pts = np.vstack([c.xy for c in curves])
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    pad_x = 0.04 * (xmax - xmin) if xmax > xmin else 1.0
    pad_y = 0.04 * (ymax - ymin) if ymax > ymin else 1.0
    xmin, xmax = xmin - pad_x, xmax + pad_x
    ymin, ymax = ymin - pad_y, ymax + pad_y

    ml, mr, mt, mb = 70, 25, 25, 55
    plot_w, plot_h = width - ml - mr, height - mt - mb
    scale = min(plot_w / (xmax - xmin), plot_h / (ymax - ymin))
    ox = ml + 0.5 * (plot_w - scale * (xmax - xmin))
    oy = mt + 0.5 * (plot_h - scale * (ymax - ymin))

    def px(x: float) -> float:
        return ox + (x - xmin) * scale

    def py(y: float) -> float:
        return oy + (ymax - y) * scale      # y grows upward in data space

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{ml}" y="{mt}" width="{plot_w}" height="{plot_h}" '
             f'fill="none" stroke="#444444" stroke-width="1"/>']

    for tx in _ticks(xmin, xmax):
        x = px(tx)
        if not ml <= x <= ml + plot_w:
            continue
        parts.append(f'<line x1="{x:.2f}" y1="{mt + plot_h}" x2="{x:.2f}" '
                     f'y2="{mt + plot_h + 6}" stroke="#444444" stroke-width="1"/>')
        parts.append(f'<text x="{x:.2f}" y="{mt + plot_h + 20}" font-size="12" '
                     f'text-anchor="middle" fill="#222222">{tx:g}</text>')
    for ty in _ticks(ymin, ymax):
        y = py(ty)
        if not mt <= y <= mt + plot_h:
            continue
        parts.append(f'<line x1="{ml - 6}" y1="{y:.2f}" x2="{ml}" y2="{y:.2f}" '
                     f'stroke="#444444" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 10}" y="{y + 4:.2f}" font-size="12" '
                     f'text-anchor="end" fill="#222222">{ty:g}</text>')
    parts.append(f'<text x="{ml + plot_w / 2:.2f}" y="{height - 12}" font-size="13" '
                 f'text-anchor="middle" fill="#222222">x [m]</text>')
    parts.append(f'<text x="16" y="{mt + plot_h / 2:.2f}" font-size="13" '
                 f'text-anchor="middle" fill="#222222" '
                 f'transform="rotate(-90 16 {mt + plot_h / 2:.2f})">z [m]</text>')

    for i, curve in enumerate(curves):
        color = curve.color or _PALETTE[i % len(_PALETTE)]
        dash = ' stroke-dasharray="7 4"' if curve.dashed else ""
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in curve.xy)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"{dash}/>')
        ly = mt + 16 + 18 * i
        parts.append(f'<line x1="{ml + plot_w - 150}" y1="{ly - 4}" x2="{ml + plot_w - 120}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"{dash}/>')
        parts.append(f'<text x="{ml + plot_w - 114}" y="{ly}" font-size="12" '
                     f'fill="#222222">{escape(curve.label)}</text>')

    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
