"""Semantic labels, dynamic/static binarization, and segmentation scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SemanticMap",
    "BinaryMask",
    "DYNAMIC",
    "STATIC",
    "IGNORE",
    "SEMANTIC_KITTI_NAMES",
    "SEMANTIC_KITTI_ROLES",
    "load_role_table",
    "binarize_semantics",
    "miou",
]

DYNAMIC = "dynamic"
STATIC = "static"
IGNORE = "ignore"
_ROLES = (DYNAMIC, STATIC, IGNORE)

# SemanticKITTI raw label ids. Moving variants (252..259) share the role of
# their base class; ids that the 19-class learning mapping folds away keep
# the role of their merge target (bus -> other-vehicle, lane-marking -> road).
SEMANTIC_KITTI_NAMES: dict[int, str] = {
    0: "unlabeled", 1: "outlier",
    10: "car", 11: "bicycle", 13: "bus", 15: "motorcycle", 16: "on-rails",
    18: "truck", 20: "other-vehicle", 30: "person", 31: "bicyclist",
    32: "motorcyclist",
    40: "road", 44: "parking", 48: "sidewalk", 49: "other-ground",
    50: "building", 51: "fence", 52: "other-structure", 60: "lane-marking",
    70: "vegetation", 71: "trunk", 72: "terrain", 80: "pole",
    81: "traffic-sign", 99: "other-object",
    252: "moving-car", 253: "moving-bicyclist", 254: "moving-person",
    255: "moving-motorcyclist", 256: "moving-on-rails", 257: "moving-bus",
    258: "moving-truck", 259: "moving-other-vehicle",
}

SEMANTIC_KITTI_ROLES: dict[int, str] = {
    0: IGNORE, 1: IGNORE, 52: IGNORE, 99: IGNORE,
    10: DYNAMIC, 11: DYNAMIC, 13: DYNAMIC, 15: DYNAMIC, 16: DYNAMIC,
    18: DYNAMIC, 20: DYNAMIC, 30: DYNAMIC, 31: DYNAMIC, 32: DYNAMIC,
    252: DYNAMIC, 253: DYNAMIC, 254: DYNAMIC, 255: DYNAMIC, 256: DYNAMIC,
    257: DYNAMIC, 258: DYNAMIC, 259: DYNAMIC,
    40: STATIC, 44: STATIC, 48: STATIC, 49: STATIC, 50: STATIC, 51: STATIC,
    60: STATIC, 70: STATIC, 71: STATIC, 72: STATIC, 80: STATIC, 81: STATIC,
}


@dataclass
class SemanticMap:
    """Per-point class ids plus an id-to-name table."""

    labels: np.ndarray
    label_names: dict[int, str] = field(default_factory=lambda: dict(SEMANTIC_KITTI_NAMES))

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass
class BinaryMask:
    """Per-point values that are exactly 0.0 (dynamic) or 1.0 (static)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isin(self.values, (0.0, 1.0)).all():
            raise ValueError("mask values must be exactly 0 or 1")

    def __len__(self) -> int:
        return self.values.shape[0]


def load_role_table(path) -> tuple[dict[int, str], dict[int, str]]:
    """Parse a mapping file of `name id {dynamic|static|ignore}` lines.

    Returns (names, roles) keyed by class id. Blank lines and lines starting
    with '#' are skipped.
    """
    names: dict[int, str] = {}
    roles: dict[int, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ValueError(f"mapping line {lineno}: expected 'name id role', got {stripped!r}")
            name, id_text, role = parts
            try:
                label = int(id_text)
            except ValueError as exc:
                raise ValueError(f"mapping line {lineno}: bad id {id_text!r}") from exc
            if role not in _ROLES:
                raise ValueError(f"mapping line {lineno}: role must be one of {_ROLES}, got {role!r}")
            names[label] = name
            roles[label] = role
    if not roles:
        raise ValueError("empty mapping file")
    return names, roles


def binarize_semantics(sem: SemanticMap,
                       roles: dict[int, str] | None = None,
                       *,
                       ignore_value: float = 1.0,
                       default_role: str | None = None) -> BinaryMask:
    """Map class ids to {0, 1}: dynamic -> 0, static -> 1, ignore -> ignore_value.

    Labels missing from the table take default_role when given, otherwise
    they are an error naming the offending label.
    """
    if roles is None:
        roles = SEMANTIC_KITTI_ROLES
    if ignore_value not in (0.0, 1.0):
        raise ValueError("ignore_value must be 0 or 1")
    if default_role is not None and default_role not in _ROLES:
        raise ValueError(f"default_role must be one of {_ROLES}")

    to_value = {DYNAMIC: 0.0, STATIC: 1.0, IGNORE: float(ignore_value)}
    values = np.empty(len(sem))
    for label in np.unique(sem.labels):
        role = roles.get(int(label), default_role)
        if role is None:
            name = sem.label_names.get(int(label), "unknown")
            raise ValueError(f"label {label} ({name}) has no dynamic/static assignment")
        values[sem.labels == label] = to_value[role]
    return BinaryMask(values=values)


def miou(pred: SemanticMap,
         gt: SemanticMap,
         num_classes: int,
         ignore: frozenset[int] | set[int] = frozenset()) -> tuple[np.ndarray, float]:
    """Per-class intersection-over-union and its mean.

    Points whose ground-truth label is in ``ignore`` are excluded entirely;
    classes absent from both prediction and ground truth are excluded from
    the mean (NaN in the per-class array). IoU_c = TP / (TP + FP + FN).
    """
    if len(pred) != len(gt):
        raise ValueError(f"length mismatch: pred {len(pred)} vs gt {len(gt)}")
    ignore = frozenset(int(i) for i in ignore)
    keep = ~np.isin(gt.labels, list(ignore)) if ignore else np.ones(len(gt), dtype=bool)
    g = gt.labels[keep]
    p = pred.labels[keep]
    if g.size == 0:
        raise ValueError("no scorable points")
    if g.size and g.max() >= num_classes:
        raise ValueError(f"gt label {g.max()} >= num_classes {num_classes}")
    bad = (p >= num_classes) & ~np.isin(p, list(ignore))
    if bad.any():
        raise ValueError(f"pred label {p[bad].max()} >= num_classes {num_classes}")

    # Predictions carrying an ignore label cannot claim any class: bin them
    # into an extra column so they count as false negatives only.
    in_ignore = np.isin(p, list(ignore)) if ignore else np.zeros(p.shape, dtype=bool)
    p_binned = np.where(in_ignore | (p >= num_classes), num_classes, p)
    conf = np.zeros((num_classes, num_classes + 1), dtype=np.int64)
    np.add.at(conf, (g, p_binned), 1)

    tp = np.diag(conf[:, :num_classes]).astype(np.float64)
    fn = conf.sum(axis=1) - tp
    fp = conf[:, :num_classes].sum(axis=0) - tp
    present = (tp + fn + fp) > 0
    iou = np.full(num_classes, np.nan)
    iou[present] = tp[present] / (tp[present] + fp[present] + fn[present])
    return iou, float(np.nanmean(iou[present]))
