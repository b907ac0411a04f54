"""KITTI-style odometry errors and saliency distribution metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .odometry import Trajectory
from .saliency import PointSaliency

__all__ = [
    "SUBSEQUENCE_LENGTHS",
    "EvalReport",
    "SaliencyScores",
    "kitti_relative_errors",
    "saliency_cc",
    "saliency_sim",
    "saliency_kld",
    "score_saliency",
    "format_eval_report",
    "eval_report_csv",
]

SUBSEQUENCE_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)

KLD_EPS = 1e-12


@dataclass
class EvalReport:
    """Relative odometry errors averaged over fixed-length subsequences.

    t_rel is translational drift in percent of distance traveled; r_rel is
    rotational drift in degrees per 100 m. per_length maps each subsequence
    length to its (t_rel, r_rel) pair.
    """

    sequence: str
    t_rel: float
    r_rel: float
    per_length: dict[int, tuple[float, float]]
    num_samples: int
    too_short: bool


@dataclass
class SaliencyScores:
    cc: float
    sim: float
    kld: float


def _pose_arrays(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    rot = np.stack([p.rotation_matrix for p in traj.poses])
    trans = np.stack([p.translation for p in traj.poses])
    return rot, trans


def kitti_relative_errors(est: Trajectory, gt: Trajectory,
                          sequence: str = "",
                          lengths: tuple[int, ...] = SUBSEQUENCE_LENGTHS) -> EvalReport:
    """Average relative pose errors over all start frames and lengths.

    For start a and length L (measured along the ground-truth arc), the end
    frame b is the first with arc(a, b) >= L and the error transform is
    E = (gt_a^-1 gt_b)^-1 (est_a^-1 est_b). Translational error is
    |trans(E)| / L in percent; rotational error angle(E) / L in deg/100m.
    """
    if len(est) != len(gt):
        raise ValueError(f"trajectory length mismatch: est {len(est)} vs gt {len(gt)}")
    if len(gt) < 2:
        raise ValueError("need at least 2 poses")
    rot_g, trans_g = _pose_arrays(gt)
    rot_e, trans_e = _pose_arrays(est)
    n = len(gt)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(trans_g, axis=0), axis=1))])

    t_all: list[np.ndarray] = []
    r_all: list[np.ndarray] = []
    per_length: dict[int, tuple[float, float]] = {}
    for length in lengths:
        ends = np.searchsorted(arc, arc + float(length), side="left")
        starts = np.nonzero(ends < n)[0]
        if starts.size == 0:
            continue
        ends = ends[starts]

        def _relative(rot, trans):
            ra, rb = rot[starts], rot[ends]
            rel_r = np.einsum("kji,kjl->kil", ra, rb)
            rel_t = np.einsum("kji,kj->ki", ra, trans[ends] - trans[starts])
            return rel_r, rel_t

        gr, gtv = _relative(rot_g, trans_g)
        er, etv = _relative(rot_e, trans_e)
        err_r = np.einsum("kji,kjl->kil", gr, er)
        err_t = np.einsum("kji,kj->ki", gr, etv - gtv)

        t_err = np.linalg.norm(err_t, axis=1) / float(length) * 100.0
        cos_a = np.clip((np.einsum("kii->k", err_r) - 1.0) / 2.0, -1.0, 1.0)
        r_err = np.degrees(np.arccos(cos_a)) / float(length) * 100.0
        t_all.append(t_err)
        r_all.append(r_err)
        per_length[length] = (float(t_err.mean()), float(r_err.mean()))

    if not t_all:
        return EvalReport(sequence=sequence, t_rel=0.0, r_rel=0.0, per_length={},
                          num_samples=0, too_short=True)
    t_cat = np.concatenate(t_all)
    r_cat = np.concatenate(r_all)
    return EvalReport(sequence=sequence, t_rel=float(t_cat.mean()),
                      r_rel=float(r_cat.mean()), per_length=per_length,
                      num_samples=int(t_cat.size), too_short=False)


def _jointly_valid(pred: PointSaliency, gt: PointSaliency) -> tuple[np.ndarray, np.ndarray]:
    if len(pred) != len(gt):
        raise ValueError(f"saliency length mismatch: {len(pred)} vs {len(gt)}")
    joint = pred.valid & gt.valid
    return pred.values[joint], gt.values[joint]


def saliency_cc(pred: PointSaliency, gt: PointSaliency) -> float:
    """Pearson correlation of z-scored maps over jointly valid points."""
    p, g = _jointly_valid(pred, gt)
    if p.size < 2:
        raise ValueError("need at least 2 jointly valid points")
    sp, sg = p.std(), g.std()
    if sp == 0.0 or sg == 0.0:
        raise ValueError("constant map")
    zp = (p - p.mean()) / sp
    zg = (g - g.mean()) / sg
    return float(np.mean(zp * zg))


def saliency_sim(pred: PointSaliency, gt: PointSaliency) -> float:
    """Histogram intersection of the two maps normalized to unit sum."""
    p, g = _jointly_valid(pred, gt)
    ps, gs = p.sum(), g.sum()
    if not (ps > 0.0 and gs > 0.0):
        raise ValueError("saliency map has non-positive sum")
    return float(np.minimum(p / ps, g / gs).sum())


def saliency_kld(pred: PointSaliency, gt: PointSaliency) -> float:
    """KL divergence of the ground truth from the prediction.

    Both maps are normalized to unit sum; terms with zero ground truth
    contribute nothing and the prediction is floored by a small epsilon.
    """
    p, g = _jointly_valid(pred, gt)
    ps, gs = p.sum(), g.sum()
    if not (ps > 0.0 and gs > 0.0):
        raise ValueError("saliency map has non-positive sum")
    p = p / ps
    g = g / gs
    pos = g > 0.0
    return float(np.sum(g[pos] * np.log(g[pos] / (p[pos] + KLD_EPS))))


def score_saliency(pred: PointSaliency, gt: PointSaliency) -> SaliencyScores:
    return SaliencyScores(cc=saliency_cc(pred, gt),
                          sim=saliency_sim(pred, gt),
                          kld=saliency_kld(pred, gt))


def format_eval_report(report: EvalReport) -> str:
    """Plain-text table of an EvalReport."""
    lines = []
    name = report.sequence or "-"
    lines.append(f"sequence {name}")
    if report.too_short:
        lines.append("trajectory too short for 100 m subsequences")
    lines.append(f"t_rel {report.t_rel:.3f} %   r_rel {report.r_rel:.3f} deg/100m   "
                 f"({report.num_samples} samples)")
    if report.per_length:
        lines.append("length_m  t_rel_%  r_rel_deg/100m")
        for length in sorted(report.per_length):
            t, r = report.per_length[length]
            lines.append(f"{length:8d}  {t:7.3f}  {r:14.3f}")
    return "\n".join(lines)


def eval_report_csv(report: EvalReport) -> str:
    """CSV dump: one `all` row plus one row per subsequence length."""
    rows = ["sequence,length_m,t_rel_percent,r_rel_deg_per_100m,samples"]
    rows.append(f"{report.sequence},all,{report.t_rel:.6f},{report.r_rel:.6f},{report.num_samples}")
    for length in sorted(report.per_length):
        t, r = report.per_length[length]
        rows.append(f"{report.sequence},{length},{t:.6f},{r:.6f},")
    return "\n".join(rows) + "\n"
