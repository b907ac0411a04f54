"""Frame-to-frame pose estimation on a saliency/semantics-weighted loss.

The objective combines a point-to-plane term and a normal-difference term,

    L = lambda * mean_i(W_i * |(p_hat_i - p_i) . n_i|^2)
            +    mean_i(W_i * |n_hat_i - n_i|^2),

where per-pair weights W_i = exp(s_i^t s_i^{t-1} c_i^t c_i^{t-1}) boost
matches that are salient (s in [0, 1]) and static (c in {0, 1}) in both
frames. A pair with any zero factor gets weight exp(0) = 1, so suppression
of dynamic points is relative: salient static pairs earn up to e times the
weight. The pose is found by damped Gauss-Newton over se(3) with
nearest-neighbor re-association each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import NormalMap, RangeImage, RigidTransform, se3_exp

__all__ = [
    "WEIGHTING_MODES",
    "OdometryConfig",
    "OdometryFrame",
    "Correspondences",
    "Trajectory",
    "SolveDiagnostics",
    "find_correspondences",
    "point_to_plane_loss",
    "normal_to_normal_loss",
    "combined_loss",
    "compute_weights",
    "weighted_loss",
    "objective_with_gradient",
    "refine_pose",
    "solve_frame_pair",
    "accumulate_trajectory",
]

WEIGHTING_MODES = ("none", "saliency_only", "semantic_only", "both")

_DAMPING_MAX = 1e10
_COND_LIMIT = 1e12


@dataclass
class OdometryConfig:
    """Solver knobs.

    lam balances the point-to-plane term against the normal term;
    huber_delta = 0 keeps the pure squared point-to-plane form.
    """

    lam: float = 1.0
    max_iterations: int = 30
    convergence_tol: float = 1e-9
    max_corr_dist: float = 2.0
    huber_delta: float = 0.3
    weighting_mode: str = "both"
    hard_mask: bool = False
    initial_damping: float = 1e-6

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("lam must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.max_corr_dist > 0.0:
            raise ValueError("max_corr_dist must be positive")
        if self.huber_delta < 0.0:
            raise ValueError("huber_delta must be >= 0")
        if self.weighting_mode not in WEIGHTING_MODES:
            raise ValueError(f"weighting_mode must be one of {WEIGHTING_MODES}")
        if not self.initial_damping > 0.0:
            raise ValueError("initial_damping must be positive")


@dataclass
class OdometryFrame:
    """Matching-ready view of one scan: points with valid unit normals.

    saliency defaults to all ones and the static mask to all ones when the
    corresponding channel is absent, which makes every weighting mode
    well-defined on plain geometry.
    """

    positions: np.ndarray
    normals: np.ndarray
    saliency: np.ndarray | None = None
    static: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        n = len(self)
        if self.normals.shape[0] != n:
            raise ValueError("normals length != point count")
        if n:
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("frame normals must be unit length")
        if self.saliency is None:
            self.saliency = np.ones(n)
        else:
            self.saliency = np.asarray(self.saliency, dtype=np.float64).reshape(-1)
            if self.saliency.shape[0] != n:
                raise ValueError("saliency length != point count")
        if self.static is None:
            self.static = np.ones(n)
        else:
            self.static = np.asarray(self.static, dtype=np.float64).reshape(-1)
            if self.static.shape[0] != n:
                raise ValueError("static mask length != point count")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def from_range_image(cls, image: RangeImage, normal_map: NormalMap) -> "OdometryFrame":
        """Keep the pixels that carry both a point and a valid normal."""
        mask = image.valid & normal_map.valid
        saliency = image.channels.get("saliency")
        static = image.channels.get("static")
        return cls(
            positions=image.xyz[mask],
            normals=normal_map.normals[mask],
            saliency=None if saliency is None else saliency[mask],
            static=None if static is None else static[mask],
        )


@dataclass
class Correspondences:
    """Matched source/target pairs with the channels the loss needs.

    Source is the later frame (t), target the earlier one (t-1); the pose
    being estimated maps source coordinates into the target frame.
    """

    src_idx: np.ndarray
    tgt_idx: np.ndarray
    src_points: np.ndarray
    tgt_points: np.ndarray
    src_normals: np.ndarray
    tgt_normals: np.ndarray
    src_saliency: np.ndarray
    tgt_saliency: np.ndarray
    src_static: np.ndarray
    tgt_static: np.ndarray

    def __post_init__(self):
        self.src_idx = np.asarray(self.src_idx, dtype=np.int64).reshape(-1)
        self.tgt_idx = np.asarray(self.tgt_idx, dtype=np.int64).reshape(-1)
        if self.size:
            norms = np.linalg.norm(self.tgt_normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("target normals must be unit length")

    @property
    def size(self) -> int:
        return self.src_idx.shape[0]

    def subset(self, mask: np.ndarray) -> "Correspondences":
        return Correspondences(
            src_idx=self.src_idx[mask], tgt_idx=self.tgt_idx[mask],
            src_points=self.src_points[mask], tgt_points=self.tgt_points[mask],
            src_normals=self.src_normals[mask], tgt_normals=self.tgt_normals[mask],
            src_saliency=self.src_saliency[mask], tgt_saliency=self.tgt_saliency[mask],
            src_static=self.src_static[mask], tgt_static=self.tgt_static[mask],
        )


@dataclass
class Trajectory:
    """Ordered absolute poses T_world_from_frame, one per scan."""

    poses: list[RigidTransform]

    def __post_init__(self):
        if not self.poses:
            raise ValueError("trajectory needs at least one pose")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.stack([p.translation for p in self.poses])


@dataclass
class SolveDiagnostics:
    iterations: int
    final_loss: float
    num_pairs: int
    converged: bool


def find_correspondences(src: OdometryFrame,
                         tgt: OdometryFrame,
                         T_current: RigidTransform,
                         max_dist: float,
                         tree: cKDTree | None = None) -> Correspondences:
    """Nearest-neighbor pairs within max_dist after transforming the source.

    Channel values of both endpoints ride along with each pair. Raises when
    no pair survives the distance gate.
    """
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("no correspondences")
    if tree is None:
        tree = cKDTree(tgt.positions)
    transformed = T_current.apply(src.positions)
    dist, idx = tree.query(transformed)
    keep = dist <= max_dist
    if not keep.any():
        raise ValueError("no correspondences")
    si = np.nonzero(keep)[0]
    ti = idx[keep]
    return Correspondences(
        src_idx=si, tgt_idx=ti,
        src_points=src.positions[si], tgt_points=tgt.positions[ti],
        src_normals=src.normals[si], tgt_normals=tgt.normals[ti],
        src_saliency=src.saliency[si], tgt_saliency=tgt.saliency[ti],
        src_static=src.static[si], tgt_static=tgt.static[ti],
    )


def _huber_terms(residuals: np.ndarray, delta: float):
    """(rho(r), rho'(r), IRLS weight) for the robustified square."""
    sq = residuals * residuals
    if delta <= 0.0:
        return sq, 2.0 * residuals, np.ones_like(residuals)
    a = np.abs(residuals)
    inl = a <= delta
    terms = np.where(inl, sq, 2.0 * delta * a - delta * delta)
    deriv = np.where(inl, 2.0 * residuals, 2.0 * delta * np.sign(residuals))
    irls = np.where(inl, 1.0, delta / np.maximum(a, 1e-300))
    return terms, deriv, irls


def point_to_plane_loss(corr: Correspondences,
                        src_transformed: np.ndarray,
                        huber_delta: float = 0.0):
    """Per-pair residuals (p_hat - p) . n plus the mean of their squares.

    src_transformed holds the transformed source cloud, indexed by
    corr.src_idx. With huber_delta > 0 residuals beyond delta contribute
    linearly instead of quadratically.
    """
    if corr.size == 0:
        raise ValueError("no correspondences")
    p_hat = np.asarray(src_transformed, dtype=np.float64)[corr.src_idx]
    residuals = np.einsum("ij,ij->i", p_hat - corr.tgt_points, corr.tgt_normals)
    terms, _, _ = _huber_terms(residuals, huber_delta)
    return residuals, terms, float(np.mean(terms))


def normal_to_normal_loss(corr: Correspondences, src_normals_rotated: np.ndarray):
    """Per-pair squared normal differences |n_hat - n|^2 plus their mean."""
    if corr.size == 0:
        raise ValueError("no correspondences")
    n_hat = np.asarray(src_normals_rotated, dtype=np.float64)[corr.src_idx]
    diff = n_hat - corr.tgt_normals
    terms = np.einsum("ij,ij->i", diff, diff)
    return terms, float(np.mean(terms))


def combined_loss(l_p2n: float, l_n2n: float, lam: float) -> float:
    """lam * L_p2n + L_n2n."""
    if not lam > 0.0:
        raise ValueError("lam must be positive")
    return lam * l_p2n + l_n2n


def compute_weights(corr: Correspondences, mode: str) -> np.ndarray:
    """Per-pair weights exp(s_t s_{t-1} c_t c_{t-1}), restricted per mode.

    Valid inputs give 1 <= W <= e, with W exactly 1 whenever any factor
    is 0 (in particular at any dynamic endpoint).
    """
    if mode not in WEIGHTING_MODES:
        raise ValueError(f"weighting_mode must be one of {WEIGHTING_MODES}")
    if mode == "none":
        return np.ones(corr.size)
    for s in (corr.src_saliency, corr.tgt_saliency):
        if s.size and (s.min() < 0.0 or s.max() > 1.0):
            raise ValueError("saliency channel out of range [0, 1]")
    for c in (corr.src_static, corr.tgt_static):
        if c.size and not np.isin(c, (0.0, 1.0)).all():
            raise ValueError("semantic mask values must be exactly 0 or 1")
    if mode == "saliency_only":
        product = corr.src_saliency * corr.tgt_saliency
    elif mode == "semantic_only":
        product = corr.src_static * corr.tgt_static
    else:
        product = corr.src_saliency * corr.tgt_saliency * corr.src_static * corr.tgt_static
    return np.exp(product)


def weighted_loss(per_pair: np.ndarray, weights: np.ndarray) -> float:
    """Mean of element-wise products; with all-unit weights this reduces
    bit-for-bit to the unweighted mean."""
    per_pair = np.asarray(per_pair, dtype=np.float64).reshape(-1)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if per_pair.shape != weights.shape:
        raise ValueError("per-pair losses and weights must have equal length")
    if per_pair.size == 0:
        raise ValueError("no correspondences")
    return float(np.mean(per_pair * weights))


def _objective(corr: Correspondences, weights: np.ndarray, T: RigidTransform,
               config: OdometryConfig) -> float:
    rot = T.rotation_matrix
    p_hat = corr.src_points @ rot.T + T.translation
    residuals = np.einsum("ij,ij->i", p_hat - corr.tgt_points, corr.tgt_normals)
    p2n_terms, _, _ = _huber_terms(residuals, config.huber_delta)
    diff = corr.src_normals @ rot.T - corr.tgt_normals
    n2n_terms = np.einsum("ij,ij->i", diff, diff)
    return combined_loss(weighted_loss(p2n_terms, weights),
                         weighted_loss(n2n_terms, weights), config.lam)


def _linearize(corr: Correspondences, weights: np.ndarray, T: RigidTransform,
               config: OdometryConfig):
    """Loss, gradient, and Gauss-Newton Hessian at T for a left increment.

    With p_hat = R p + t and m_hat = R m, the residual Jacobians w.r.t.
    delta = (omega, v) are [p_hat x n; n] for the point-to-plane scalar and
    [-[m_hat]x | 0] for the normal difference.
    """
    m = corr.size
    rot = T.rotation_matrix
    p_hat = corr.src_points @ rot.T + T.translation
    m_hat = corr.src_normals @ rot.T

    residuals = np.einsum("ij,ij->i", p_hat - corr.tgt_points, corr.tgt_normals)
    p2n_terms, p2n_deriv, p2n_irls = _huber_terms(residuals, config.huber_delta)
    e = m_hat - corr.tgt_normals
    n2n_terms = np.einsum("ij,ij->i", e, e)

    loss = combined_loss(weighted_loss(p2n_terms, weights),
                         weighted_loss(n2n_terms, weights), config.lam)

    jac = np.concatenate([np.cross(p_hat, corr.tgt_normals), corr.tgt_normals], axis=1)
    grad = (config.lam / m) * ((weights * p2n_deriv)[:, None] * jac).sum(axis=0)
    grad[:3] += (2.0 / m) * (weights[:, None] * np.cross(m_hat, e)).sum(axis=0)

    hess = (2.0 * config.lam / m) * (jac * (weights * p2n_irls)[:, None]).T @ jac
    # Gauss-Newton block of the normal term: 2 (I - m_hat m_hat^T) per pair.
    wsum = weights.sum()
    outer = np.einsum("i,ij,ik->jk", weights, m_hat, m_hat)
    hess[:3, :3] += (2.0 / m) * (wsum * np.eye(3) - outer)
    return loss, grad, hess


def objective_with_gradient(corr: Correspondences, T: RigidTransform,
                            config: OdometryConfig,
                            weights: np.ndarray | None = None):
    """Weighted objective value and its analytic se(3) gradient at T."""
    if weights is None:
        weights = compute_weights(corr, config.weighting_mode)
    loss, grad, _ = _linearize(corr, weights, T, config)
    return loss, grad


def _step(corr: Correspondences, weights: np.ndarray, T: RigidTransform,
          damping: float, config: OdometryConfig):
    """One damped Gauss-Newton step on a fixed correspondence set.

    Damping is multiplied by 10 after a rejected trial (loss increase) and
    divided by 10 after an accepted one. Returns (T, loss, |delta|, damping,
    accepted).
    """
    loss, grad, hess = _linearize(corr, weights, T, config)
    if np.linalg.cond(hess) > _COND_LIMIT:
        raise ValueError("degenerate geometry")
    while damping <= _DAMPING_MAX:
        delta = np.linalg.solve(hess + damping * np.eye(6), -grad)
        T_new = se3_exp(delta) @ T
        new_loss = _objective(corr, weights, T_new, config)
        if new_loss <= loss:
            return T_new, new_loss, float(np.linalg.norm(delta)), damping / 10.0, True
        damping *= 10.0
    return T, loss, 0.0, damping, False


def refine_pose(corr: Correspondences, T_init: RigidTransform,
                config: OdometryConfig, weights: np.ndarray | None = None):
    """Iterate damped Gauss-Newton on one fixed correspondence set.

    Returns the refined pose plus the accepted loss sequence (starting with
    the loss at T_init), which is non-increasing by construction.
    """
    if weights is None:
        weights = compute_weights(corr, config.weighting_mode)
    T = T_init
    damping = config.initial_damping
    losses = [_objective(corr, weights, T, config)]
    for _ in range(config.max_iterations):
        T, loss, step_norm, damping, accepted = _step(corr, weights, T, damping, config)
        if not accepted:
            break
        losses.append(loss)
        if step_norm < config.convergence_tol:
            break
    return T, losses


def solve_frame_pair(src: OdometryFrame, tgt: OdometryFrame,
                     config: OdometryConfig,
                     T_init: RigidTransform | None = None):
    """Estimate the pose mapping src (frame t) into tgt (frame t-1).

    Each iteration re-associates nearest neighbors at the current pose,
    linearizes the weighted objective, and takes one accepted damped
    Gauss-Newton step. Stops when the update norm drops below
    convergence_tol or max_iterations is reached.
    """
    T = RigidTransform.identity() if T_init is None else T_init
    tree = cKDTree(tgt.positions) if len(tgt) else None
    damping = config.initial_damping
    loss = float("nan")
    num_pairs = 0
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        corr = find_correspondences(src, tgt, T, config.max_corr_dist, tree=tree)
        if config.hard_mask:
            keep = (corr.src_static * corr.tgt_static) != 0.0
            if not keep.any():
                raise ValueError("no correspondences")
            corr = corr.subset(keep)
        num_pairs = corr.size
        weights = compute_weights(corr, config.weighting_mode)
        T, loss, step_norm, damping, accepted = _step(corr, weights, T, damping, config)
        if not accepted:
            break
        if step_norm < config.convergence_tol:
            converged = True
            break
    return T, SolveDiagnostics(iterations=iterations, final_loss=loss,
                               num_pairs=num_pairs, converged=converged)


def accumulate_trajectory(relative: list[RigidTransform]) -> Trajectory:
    """Chain relative poses T_{t-1,t} into absolute poses rooted at identity."""
    poses = [RigidTransform.identity()]
    for T in relative:
        poses.append(poses[-1] @ T)
    return Trajectory(poses=poses)
