#!/usr/bin/env python3
"""Run the four weighting modes over one sequence and tabulate the errors.

Each mode (none, saliency, semantic, both) is one odometry run; the table
reports t_rel [%] and r_rel [deg/100m] against the ground-truth poses.
"""

import argparse
from pathlib import Path

from swlo.evaluation import kitti_relative_errors
from swlo.io import read_poses, write_poses
from swlo.odometry import OdometryConfig, Trajectory, accumulate_trajectory
from swlo.pipeline import ProjectionConfig, build_frame, run_odometry

MODES = {"none": "none", "saliency": "saliency_only",
         "semantic": "semantic_only", "both": "both"}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scans", required=True)
    parser.add_argument("--labels")
    parser.add_argument("--saliency")
    parser.add_argument("--gt", required=True, help="ground-truth pose file")
    parser.add_argument("--out", required=True, help="directory for per-mode poses")
    parser.add_argument("--frames", type=int, default=0, help="limit frame count")
    parser.add_argument("--huber", type=float, default=0.3)
    parser.add_argument("--lambda", dest="lam", type=float, default=1.0)
    args = parser.parse_args()

    scans = sorted(Path(args.scans).glob("*.bin"))
    labels = sorted(Path(args.labels).glob("*.label")) if args.labels else None
    saliency = sorted(Path(args.saliency).glob("*.ptch")) if args.saliency else None
    count = min(len(scans), args.frames) if args.frames else len(scans)
    projection = ProjectionConfig()

    gt_all = read_poses(args.gt)
    gt = Trajectory(poses=gt_all.poses[:count])
    gt_rels = [gt.poses[k - 1].inverse() @ gt.poses[k] for k in range(1, count)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"{'mode':10s} {'t_rel [%]':>10s} {'r_rel [deg/100m]':>18s} "
          f"{'pair t err [m]':>15s}")
    for flag, mode in MODES.items():
        config = OdometryConfig(lam=args.lam, huber_delta=args.huber,
                                weighting_mode=mode)

        def loader(k):
            return build_frame(scans[k],
                               label_path=None if labels is None else labels[k],
                               saliency_path=None if saliency is None else saliency[k],
                               projection=projection)

        relatives, _ = run_odometry(loader, count, config)
        est = accumulate_trajectory(relatives)
        write_poses(est, out / f"poses_{flag}.txt")
        report = kitti_relative_errors(est, gt, sequence=flag)
        # mean per-pair translation error stays meaningful on short sequences
        pair_err = sum(
            float(sum((a.translation - b.translation) ** 2) ** 0.5)
            for a, b in zip(relatives, gt_rels)) / max(len(gt_rels), 1)
        note = " (too short for length-based errors)" if report.too_short else ""
        print(f"{flag:10s} {report.t_rel:10.3f} {report.r_rel:18.3f} "
              f"{pair_err:15.4f}{note}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
