"""Command-line front end: transfer, odom, eval-odom, eval-sal, plot.

Every command validates its inputs, writes a manifest next to its outputs,
and exits nonzero with a one-line diagnostic on stderr when anything fails.
Reports go to stdout. All processing is deterministic; the only sampling
(optional scan subsampling) is seeded via --seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import eval_report_csv, format_eval_report, kitti_relative_errors, score_saliency
from .io import (TrajectoryCurve, camera_from_calib, read_kitti_calib,
                 read_kitti_scan, read_pgm, read_point_channel, read_poses,
                 write_point_channel, write_poses, write_trajectory_svg)
from .odometry import OdometryConfig, Trajectory, accumulate_trajectory
from .pipeline import ProjectionConfig, build_frame, run_odometry
from .saliency import PointSaliency, fuse_annotators, normalize_saliency, transfer_saliency
from .semantics import load_role_table

_WEIGHTING = {"none": "none", "saliency": "saliency_only",
              "semantic": "semantic_only", "both": "both"}

_ODOM_DEFAULTS: dict[str, object] = {
    "weighting": "both",
    "lambda": 1.0,
    "hard_mask": False,
    "max_iters": 30,
    "tol": 1e-9,
    "huber": 0.3,
    "max_corr_dist": 2.0,
    "height": 64,
    "width": 720,
    "fov_up": 3.0,       # degrees at the CLI surface
    "fov_down": -25.0,
    "max_points": 0,     # 0 disables subsampling
    "seed": 0,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _load_config_file(path) -> dict[str, object]:
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _ODOM_DEFAULTS:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            default = _ODOM_DEFAULTS[key]
            if isinstance(default, bool):
                values[key] = _parse_bool(raw)
            elif isinstance(default, int):
                values[key] = int(raw)
            elif isinstance(default, float):
                values[key] = float(raw)
            else:
                values[key] = raw
    return values


def _odom_settings(args) -> dict[str, object]:
    settings = dict(_ODOM_DEFAULTS)
    if args.config:
        settings.update(_load_config_file(args.config))
    overrides = {
        "weighting": args.weighting, "lambda": args.lam,
        "hard_mask": True if args.hard_mask else None,
        "max_iters": args.max_iters, "tol": args.tol, "huber": args.huber,
        "max_corr_dist": args.max_corr_dist, "height": args.height,
        "width": args.width, "fov_up": args.fov_up, "fov_down": args.fov_down,
        "max_points": args.max_points, "seed": args.seed,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if settings["weighting"] not in _WEIGHTING:
        raise ValueError(f"weighting must be one of {sorted(_WEIGHTING)}")
    return settings


def _write_manifest(out_dir: Path, command: str, inputs: dict, settings: dict,
                    timings: dict[str, float]) -> None:
    manifest = {
        "tool": "swlo",
        "version": __version__,
        "command": command,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "config": settings,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_config_snapshot(out_dir: Path, settings: dict) -> None:
    lines = [f"{key}={settings[key]}" for key in sorted(settings)]
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sorted_files(directory, pattern: str, what: str) -> list[Path]:
    files = sorted(Path(directory).glob(pattern))
    if not files:
        raise ValueError(f"no {what} matching {pattern} in {directory}")
    return files


def cmd_transfer(args) -> int:
    t_start = time.perf_counter()
    scans = _sorted_files(args.scans, "*.bin", "scans")
    images_dir = Path(args.images)
    calib = read_kitti_calib(args.calib)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    for scan_path in scans:
        stem = scan_path.stem
        candidates = sorted(images_dir.glob(f"{stem}*.pgm"))
        if not candidates:
            raise ValueError(f"frame {stem}: no saliency image in {images_dir}")
        fused = fuse_annotators([read_pgm(p) for p in candidates])
        cam = camera_from_calib(calib, fused.width, fused.height, camera=args.camera)
        cloud = read_kitti_scan(scan_path)
        saliency = transfer_saliency(cloud, [(cam, fused)])
        if args.normalize:
            try:
                saliency = normalize_saliency(saliency)
            except ValueError as exc:
                raise ValueError(f"frame {stem}: {exc}") from exc
        write_point_channel(saliency.values, out_dir / f"{stem}.ptch")

    settings = {"camera": args.camera, "normalize": bool(args.normalize)}
    _write_manifest(out_dir, "transfer",
                    {"scans": args.scans, "images": args.images, "calib": args.calib},
                    settings, {"total": time.perf_counter() - t_start})
    print(f"transferred saliency for {len(scans)} scans to {out_dir}")
    return 0


def cmd_odom(args) -> int:
    t_start = time.perf_counter()
    settings = _odom_settings(args)
    scans = _sorted_files(args.scans, "*.bin", "scans")
    labels = _sorted_files(args.labels, "*.label", "labels") if args.labels else None
    saliency = _sorted_files(args.saliency, "*.ptch", "saliency channels") if args.saliency else None
    if labels is not None and len(labels) != len(scans):
        raise ValueError(f"{len(labels)} label files for {len(scans)} scans")
    if saliency is not None and len(saliency) != len(scans):
        raise ValueError(f"{len(saliency)} saliency files for {len(scans)} scans")

    roles = None
    if args.mapping:
        _, roles = load_role_table(args.mapping)

    config = OdometryConfig(
        lam=float(settings["lambda"]),
        max_iterations=int(settings["max_iters"]),
        convergence_tol=float(settings["tol"]),
        max_corr_dist=float(settings["max_corr_dist"]),
        huber_delta=float(settings["huber"]),
        weighting_mode=_WEIGHTING[str(settings["weighting"])],
        hard_mask=bool(settings["hard_mask"]),
    )
    projection = ProjectionConfig(
        height=int(settings["height"]), width=int(settings["width"]),
        fov_up=math.radians(float(settings["fov_up"])),
        fov_down=math.radians(float(settings["fov_down"])),
    )
    max_points = int(settings["max_points"]) or None
    seed = int(settings["seed"])

    def loader(k: int):
        return build_frame(
            scans[k],
            label_path=None if labels is None else labels[k],
            saliency_path=None if saliency is None else saliency[k],
            projection=projection, roles=roles,
            max_points=max_points, seed=seed + k)

    t_solve = time.perf_counter()
    relatives, diagnostics = run_odometry(loader, len(scans), config,
                                          parallel=args.parallel)
    t_done = time.perf_counter()

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_poses(accumulate_trajectory(relatives), out_dir / "poses.txt")
    write_poses(Trajectory(poses=relatives), out_dir / "relative_poses.txt")
    _write_config_snapshot(out_dir, settings)
    _write_manifest(out_dir, "odom",
                    {"scans": args.scans, "labels": args.labels or "",
                     "saliency": args.saliency or "", "mapping": args.mapping or ""},
                    settings,
                    {"setup": t_solve - t_start, "solve": t_done - t_solve,
                     "total": time.perf_counter() - t_start})

    losses = np.array([d.final_loss for d in diagnostics])
    iters = np.array([d.iterations for d in diagnostics])
    print(f"solved {len(relatives)} frame pairs "
          f"(weighting {settings['weighting']}, "
          f"mean iterations {iters.mean():.1f}, "
          f"finite losses {int(np.isfinite(losses).sum())}/{losses.size})")
    print(f"wrote {out_dir / 'poses.txt'}")
    return 0


def cmd_eval_odom(args) -> int:
    est = read_poses(args.est)
    gt = read_poses(args.gt)
    sequence = args.sequence or Path(args.est).stem
    report = kitti_relative_errors(est, gt, sequence=sequence)
    print(format_eval_report(report))
    if args.csv:
        Path(args.csv).write_text(eval_report_csv(report), encoding="utf-8")
    return 0


def cmd_eval_sal(args) -> int:
    pred_files = _sorted_files(args.pred, "*.ptch", "predicted channels")
    gt_files = _sorted_files(args.gt, "*.ptch", "ground-truth channels")
    if len(pred_files) != len(gt_files):
        raise ValueError(f"{len(pred_files)} predictions vs {len(gt_files)} ground truths")
    rows = []
    for pred_path, gt_path in zip(pred_files, gt_files):
        if pred_path.stem != gt_path.stem:
            raise ValueError(f"frame mismatch: {pred_path.name} vs {gt_path.name}")
        pred_vals = read_point_channel(pred_path)
        gt_vals = read_point_channel(gt_path)
        if pred_vals.size != gt_vals.size:
            raise ValueError(f"{pred_path.name}: {pred_vals.size} points vs {gt_vals.size}")
        ones = np.ones(pred_vals.size, dtype=bool)
        try:
            scores = score_saliency(PointSaliency(pred_vals, ones),
                                    PointSaliency(gt_vals, ones))
        except ValueError as exc:
            raise ValueError(f"{pred_path.name}: {exc}") from exc
        rows.append((pred_path.stem, scores))
        print(f"{pred_path.stem}  cc {scores.cc:+.4f}  sim {scores.sim:.4f}  kld {scores.kld:.4f}")
    cc = float(np.mean([s.cc for _, s in rows]))
    sim = float(np.mean([s.sim for _, s in rows]))
    kld = float(np.mean([s.kld for _, s in rows]))
    print(f"mean    cc {cc:+.4f}  sim {sim:.4f}  kld {kld:.4f}")
    if args.csv:
        lines = ["frame,cc,sim,kld"]
        lines += [f"{stem},{s.cc:.6f},{s.sim:.6f},{s.kld:.6f}" for stem, s in rows]
        lines.append(f"mean,{cc:.6f},{sim:.6f},{kld:.6f}")
        Path(args.csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_plot(args) -> int:
    curves = []
    if args.gt:
        gt = read_poses(args.gt)
        curves.append(TrajectoryCurve(label="ground truth",
                                      xy=gt.positions()[:, [0, 2]],
                                      color="#000000", dashed=True))
    for traj_path in args.trajectories:
        traj = read_poses(traj_path)
        curves.append(TrajectoryCurve(label=Path(traj_path).stem,
                                      xy=traj.positions()[:, [0, 2]]))
    write_trajectory_svg(args.out, curves)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swlo",
        description="Saliency- and semantics-weighted LiDAR odometry toolkit")
    parser.add_argument("--version", action="version", version=f"swlo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transfer", help="project image saliency onto lidar scans")
    p.add_argument("--scans", required=True, help="directory of *.bin scans")
    p.add_argument("--images", required=True,
                   help="directory of *.pgm saliency maps; <frame>*.pgm are fused")
    p.add_argument("--calib", required=True, help="KITTI calib.txt with P*/Tr entries")
    p.add_argument("--camera", default="P2", help="projection matrix name (default P2)")
    p.add_argument("--out", required=True, help="output directory for *.ptch channels")
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="skip min-max normalization over visible points")
    p.set_defaults(func=cmd_transfer, normalize=True)

    p = sub.add_parser("odom", help="frame-to-frame odometry over a sequence")
    p.add_argument("--scans", required=True, help="directory of *.bin scans")
    p.add_argument("--labels", help="directory of *.label semantic files")
    p.add_argument("--saliency", help="directory of *.ptch saliency channels")
    p.add_argument("--mapping", help="class mapping file (name id role per line)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--weighting", choices=sorted(_WEIGHTING),
                   help="loss weighting mode (default both)")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="balance of the point-to-plane term (default 1.0)")
    p.add_argument("--hard-mask", action="store_true", default=None,
                   help="drop pairs whose static masks multiply to zero")
    p.add_argument("--max-iters", type=int, help="solver iteration cap (default 30)")
    p.add_argument("--tol", type=float, help="update-norm convergence threshold")
    p.add_argument("--huber", type=float,
                   help="robust kernel width in meters, 0 disables (default 0.3)")
    p.add_argument("--max-corr-dist", type=float,
                   help="correspondence distance gate in meters (default 2.0)")
    p.add_argument("--height", type=int, help="range image rows (default 64)")
    p.add_argument("--width", type=int, help="range image columns (default 720)")
    p.add_argument("--fov-up", type=float, help="upper vertical fov in degrees (default 3)")
    p.add_argument("--fov-down", type=float, help="lower vertical fov in degrees (default -25)")
    p.add_argument("--max-points", type=int,
                   help="random subsample cap per scan, 0 disables (default 0)")
    p.add_argument("--seed", type=int, help="seed for any sampling (default 0)")
    p.add_argument("--parallel", type=int, default=0,
                   help="solve pairs concurrently with identity initialization")
    p.set_defaults(func=cmd_odom)

    p = sub.add_parser("eval-odom", help="relative errors of an estimated trajectory")
    p.add_argument("--est", required=True, help="estimated pose file")
    p.add_argument("--gt", required=True, help="ground-truth pose file")
    p.add_argument("--sequence", help="sequence name for the report")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_eval_odom)

    p = sub.add_parser("eval-sal", help="CC/SIM/KLD of per-point saliency channels")
    p.add_argument("--pred", required=True, help="directory of predicted *.ptch")
    p.add_argument("--gt", required=True, help="directory of ground-truth *.ptch")
    p.add_argument("--csv", help="also write per-frame scores as CSV")
    p.set_defaults(func=cmd_eval_sal)

    p = sub.add_parser("plot", help="overlay trajectories as an SVG")
    p.add_argument("trajectories", nargs="+", help="estimated pose files")
    p.add_argument("--gt", help="ground-truth pose file (drawn dashed black)")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
