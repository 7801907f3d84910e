"""Command-line entry point: ``lmreg {synth,register,eval,gradcheck}``.

Exit codes: 0 ok, 2 usage or input error, 3 registration did not converge,
4 verification failure.
"""

import argparse
import copy
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidArgumentError, RegistrationDivergedError
from .evaluation import pose_error, rmse_per_landmark, write_report
from .geometry import (CameraIntrinsics, Pose, VolumeFrame, camera_depths,
                       detector_to_registration, project_landmarks, voxel_to_world)
from .heatmap import decode, read_heatmaps, write_heatmaps
from .io import config_hash, read_json, read_landmarks, write_json, write_landmarks
from .registration import (PRESETS, OptimizerConfig, RegistrationProblem, estimate_pose,
                           loss_gradient, reprojection_loss)
from .synthesis import (SamplingRanges, SyntheticCase, case_to_heatmaps, check_non_degenerate,
                        generate_indexed_case, make_rng, pelvis_landmarks)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_VERIFY_FAILED = 4

GRADCHECK_STEP = 1e-5
GRADCHECK_RTOL = 1e-4
# heatmap fixtures need every landmark well inside the frame
HEATMAP_MAX_EXTENT = 0.9

DEFAULT_CONFIG = {
    "intrinsics": {"sdd": 1020.0, "pixel_spacing": 0.5, "image_size": [768, 768],
                   "principal_point": None},
    "volume": {"center": [256.0, 256.0, 128.0], "spacing": [0.8, 0.8, 1.0], "vtd": 800.0},
    "landmarks_3d": None,
    "sampling": {"rot_range_deg": 45.0, "trans_range_mm": 50.0},
    "noise_sigma": 0.0,
    "optimizer": {"preset": "paper", "method": None, "learning_rate": None,
                  "max_iters": None, "tolerance": None},
    "bounds": {"rotation_rad": 2 * np.pi, "translation_mm": 500.0},
    "heatmap": {"tau": 1.0, "sigma": 2.0, "net_size": 512},
    "seed": 42,
}


class UsageError(Exception):
    pass


def _merge(base, override, where="config"):
    for key, value in override.items():
        if key not in base:
            raise UsageError(f"{where}: unknown key {key!r}")
        if isinstance(base[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise UsageError(f"{where}.{key}: expected an object")
            _merge(base[key], value, f"{where}.{key}")
        else:
            base[key] = value


def load_config(args):
    """Defaults, then the ``--config`` file, then explicit flags."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        doc = read_json(args.config)
        if not isinstance(doc, dict):
            raise UsageError(f"{args.config}: top level must be an object")
        _merge(cfg, doc, str(args.config))
    flag_map = {
        "seed": ("seed",),
        "rot_range": ("sampling", "rot_range_deg"),
        "trans_range": ("sampling", "trans_range_mm"),
        "noise": ("noise_sigma",),
        "preset": ("optimizer", "preset"),
        "optimizer": ("optimizer", "method"),
        "lr": ("optimizer", "learning_rate"),
        "iters": ("optimizer", "max_iters"),
        "tol": ("optimizer", "tolerance"),
        "tau": ("heatmap", "tau"),
        "sigma": ("heatmap", "sigma"),
        "net_size": ("heatmap", "net_size"),
        "landmarks3d_voxels": ("landmarks_3d",),
    }
    for flag, keys in flag_map.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        node = cfg
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = str(value) if flag == "landmarks3d_voxels" else value
    _check_config(cfg)
    return cfg


def _check_config(cfg):
    if cfg["optimizer"]["preset"] not in PRESETS:
        raise UsageError(f"unknown preset {cfg['optimizer']['preset']!r}")
    if cfg["landmarks_3d"] is not None and not Path(cfg["landmarks_3d"]).is_file():
        raise UsageError(f"landmark file not found: {cfg['landmarks_3d']}")
    # constructing the objects runs the module-level validation
    intrinsics_from(cfg)
    volume_from(cfg)
    ranges_from(cfg)
    optimizer_from(cfg)
    hm = cfg["heatmap"]
    for key in ("tau", "sigma", "net_size"):
        if not hm[key] > 0:
            raise UsageError(f"heatmap.{key} must be > 0")
    if cfg["noise_sigma"] < 0:
        raise UsageError("noise_sigma must be >= 0")


def intrinsics_from(cfg):
    return CameraIntrinsics.from_dict(cfg["intrinsics"])


def volume_from(cfg):
    return VolumeFrame.from_dict(cfg["volume"])


def ranges_from(cfg):
    s = cfg["sampling"]
    return SamplingRanges(s["rot_range_deg"], s["trans_range_mm"])


def optimizer_from(cfg):
    opt = cfg["optimizer"]
    overrides = {k: opt[k] for k in ("method", "learning_rate", "max_iters", "tolerance")
                 if opt[k] is not None}
    return OptimizerConfig.preset(opt["preset"], **overrides)


def landmarks_from(cfg):
    """World-frame 3D landmarks: a voxel CSV through the volume frame, or the pelvic fixture."""
    if cfg["landmarks_3d"] is None:
        return pelvis_landmarks(volume_from(cfg))
    voxels = read_landmarks(cfg["landmarks_3d"], dim=3)
    return check_non_degenerate(voxel_to_world(voxels, volume_from(cfg)))


def normalized(cfg):
    """Config as hashed: resolved optimizer settings, no filesystem paths."""
    out = copy.deepcopy(cfg)
    out["optimizer"] = dict(optimizer_from(cfg).to_dict(), preset=cfg["optimizer"]["preset"])
    out["intrinsics"] = intrinsics_from(cfg).to_dict()
    if out["landmarks_3d"] is not None:
        out["landmarks_3d"] = landmarks_from(cfg).tolist()
    return out


def _ensure_out_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc.strerror}") from None
    probe = path / ".lmreg-write-test"
    try:
        probe.write_bytes(b"")
        probe.unlink()
    except OSError:
        raise UsageError(f"output directory {path} is not writable") from None
    return path


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# --- synth -----------------------------------------------------------------

def _synth_one(task):
    index, cfg, out_dir, heatmaps, export = task
    chash = config_hash(normalized(cfg))
    case = generate_indexed_case(cfg["seed"], index, landmarks_from(cfg), intrinsics_from(cfg),
                                 ranges_from(cfg), cfg["noise_sigma"],
                                 max_extent=HEATMAP_MAX_EXTENT if heatmaps else 2.0)
    doc = case.to_dict()
    doc["config_hash"] = chash
    write_json(out_dir / f"{case.case_id}.json", doc)
    if heatmaps:
        hm = cfg["heatmap"]
        maps = case_to_heatmaps(case, hm["sigma"], hm["net_size"])
        write_heatmaps(out_dir / f"{case.case_id}.hmap", np.stack([m.logits for m in maps]))
    if export:
        write_landmarks(out_dir / "gt" / f"{case.case_id}.csv", case.landmarks_2d_gt)
        write_landmarks(out_dir / "observed" / f"{case.case_id}.csv", case.landmarks_2d_noisy)
        write_landmarks(out_dir / "landmarks3d" / f"{case.case_id}.csv", case.landmarks_3d)
    return case.case_id


def cmd_synth(args):
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    cfg = load_config(args)
    out_dir = _ensure_out_dir(args.out)
    if args.export_landmarks:
        for sub in ("gt", "observed", "landmarks3d"):
            _ensure_out_dir(out_dir / sub)
    tasks = [(i, cfg, out_dir, args.heatmaps, args.export_landmarks) for i in range(args.count)]
    for case_id in _map(_synth_one, tasks, args.jobs):
        print(f"wrote {out_dir / case_id}.json")
    return EXIT_OK


# --- register --------------------------------------------------------------

def _registration_inputs(args, cfg):
    """List of (stem, landmarks_3d, observations_2d, intrinsics, true pose or None, source)."""
    inputs = []
    if args.landmarks3d or args.landmarks2d:
        if not (args.landmarks3d and args.landmarks2d):
            raise UsageError("--landmarks3d and --landmarks2d must be given together")
        if args.cases:
            raise UsageError("give either case files or --landmarks3d/--landmarks2d, not both")
        l3 = read_landmarks(args.landmarks3d, dim=3)
        l2 = read_landmarks(args.landmarks2d, dim=2)
        inputs.append((Path(args.landmarks2d).stem, l3, l2, intrinsics_from(cfg), None,
                       [Path(args.landmarks3d).name, Path(args.landmarks2d).name]))
        return inputs
    if not args.cases:
        raise UsageError("no inputs: pass case files/directories or --landmarks3d/--landmarks2d")
    paths = []
    for item in args.cases:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.json")))
        elif p.is_file():
            paths.append(p)
        else:
            raise UsageError(f"input not found: {p}")
    if not paths:
        raise UsageError("no case files found")
    hm = cfg["heatmap"]
    for p in paths:
        case = SyntheticCase.from_dict(read_json(p))
        sources = [p.name]
        if args.from_heatmaps:
            hpath = p.with_suffix(".hmap")
            if not hpath.is_file():
                raise UsageError(f"heatmap file not found: {hpath}")
            stack = read_heatmaps(hpath)
            det_size = case.intrinsics.image_size[0]
            observed = detector_to_registration(decode(stack, "soft", hm["tau"]),
                                                stack.shape[-1], det_size)
            sources.append(hpath.name)
        else:
            observed = case.landmarks_2d_noisy
        inputs.append((p.stem, case.landmarks_3d, observed, case.intrinsics, case.true_pose,
                       sources))
    return inputs


def _register_one(task):
    stem, l3, l2, intr, true_pose, sources, cfg, out_dir = task
    opt = optimizer_from(cfg)
    b = cfg["bounds"]
    problem = RegistrationProblem(l3, l2, intr, b["rotation_rad"], b["translation_mm"])
    record = {
        "input": sources,
        "config_hash": config_hash(normalized(cfg)),
        "optimizer": opt.to_dict(),
        "n_landmarks": problem.n_landmarks,
    }
    try:
        result = estimate_pose(problem, opt)
    except RegistrationDivergedError as exc:
        record.update(converged=False, diverged_at=exc.iteration)
        write_json(out_dir / f"{stem}.run.json", record)
        return stem, False, float("nan")
    rmse = result.reprojection_rmse(problem.n_landmarks)
    record.update(
        pose={"rotation_deg": result.pose.r_degrees.tolist(),
              "translation_mm": result.pose.t.tolist()},
        final_loss=result.final_loss,
        reprojection_rmse_px=rmse,
        iterations=result.iterations_run,
        converged=result.converged,
        trace=list(result.trace),
    )
    if true_pose is not None:
        err = pose_error(result.pose, true_pose)
        record["pose_error"] = {"rotation_deg": err.rotation_error,
                                "translation_mm": err.translation_error,
                                "pose_rmse": err.pose_rmse}
    write_json(out_dir / f"{stem}.run.json", record)
    write_landmarks(out_dir / "reprojected" / f"{stem}.csv",
                    project_landmarks(result.pose, intr, l3))
    write_landmarks(out_dir / "observed" / f"{stem}.csv", l2)
    return stem, result.converged, rmse


def cmd_register(args):
    cfg = load_config(args)
    inputs = _registration_inputs(args, cfg)
    out_dir = _ensure_out_dir(args.out)
    _ensure_out_dir(out_dir / "reprojected")
    _ensure_out_dir(out_dir / "observed")
    tasks = [(*item, cfg, out_dir) for item in inputs]
    status = EXIT_OK
    for stem, converged, rmse in _map(_register_one, tasks, args.jobs):
        print(f"{stem}: {'converged' if converged else 'NOT converged'}, "
              f"reprojection RMSE {rmse:.6g} px")
        if not converged:
            status = EXIT_NOT_CONVERGED
    return status


# --- eval ------------------------------------------------------------------

def cmd_eval(args):
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
    pred = {p.stem: p for p in pred_dir.glob("*.csv")}
    gt = {p.stem: p for p in gt_dir.glob("*.csv")}
    if not pred and not gt:
        raise UsageError("no landmark files found in either directory")
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise UsageError(f"missing prediction {pred_dir / (missing[0] + '.csv')} "
                         f"for {gt[missing[0]]}")
    missing = sorted(set(pred) - set(gt))
    if missing:
        raise UsageError(f"missing ground truth {gt_dir / (missing[0] + '.csv')} "
                         f"for {pred[missing[0]]}")
    stems = sorted(gt)
    p_sets = [read_landmarks(pred[s], dim=2) for s in stems]
    g_sets = [read_landmarks(gt[s], dim=2) for s in stems]
    for s, a, b in zip(stems, p_sets, g_sets):
        if a.shape != b.shape:
            raise UsageError(f"{s}: {len(a)} predicted vs {len(b)} ground-truth landmarks")
    if len({a.shape for a in g_sets}) != 1:
        raise UsageError("landmark counts differ between images")
    chash = config_hash({"pred": stems, "tool": "lmreg-eval", "version": __version__})
    report = rmse_per_landmark(p_sets, g_sets, config_hash=chash)
    print(report.table())
    if args.out:
        out = Path(args.out)
        _ensure_out_dir(out.parent)
        write_report(out, report)
    return EXIT_OK


# --- gradcheck -------------------------------------------------------------

def _random_problem(rng, landmarks, intr):
    while True:
        theta = np.concatenate([np.deg2rad(rng.uniform(-45, 45, 3)), rng.uniform(-50, 50, 3)])
        target = np.concatenate([np.deg2rad(rng.uniform(-45, 45, 3)), rng.uniform(-50, 50, 3)])
        if np.min(camera_depths(Pose.from_vector(theta), landmarks)) <= 1.0:
            continue
        obs = project_landmarks(Pose.from_vector(target), intr, landmarks)
        obs = obs + rng.normal(0.0, 5.0, obs.shape)
        return theta, RegistrationProblem(landmarks, obs, intr)


def central_difference(theta, problem, step=GRADCHECK_STEP):
    grad = np.empty(6)
    for k in range(6):
        e = np.zeros(6)
        e[k] = step
        grad[k] = (reprojection_loss(theta + e, problem)
                   - reprojection_loss(theta - e, problem)) / (2 * step)
    return grad


def relative_error(analytic, numeric):
    """Per-component ``|a - n| / max(|a|, |n|)``, floored at 1e-8 of the largest entry."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    floor = 1e-8 * max(np.max(scale), 1.0)
    return np.abs(analytic - numeric) / np.maximum(scale, floor)


def cmd_gradcheck(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = load_config(args)
    landmarks = landmarks_from(cfg)
    intr = intrinsics_from(cfg)
    rng = make_rng(cfg["seed"])
    names = ("r_x", "r_y", "r_z", "t_x", "t_y", "t_z")
    worst = (0.0, 0, 0)
    failures = 0
    for trial in range(args.trials):
        theta, problem = _random_problem(rng, landmarks, intr)
        analytic = loss_gradient(theta, problem)
        if args.inject_gradient_error:
            analytic = analytic * (1.0 + args.inject_gradient_error)
        rel = relative_error(analytic, central_difference(theta, problem))
        k = int(np.argmax(rel))
        if rel[k] > worst[0]:
            worst = (float(rel[k]), trial, k)
        failures += int(rel[k] >= GRADCHECK_RTOL)
    rel, trial, k = worst
    print(f"gradcheck: {args.trials} trial(s), {failures} failed, worst relative error "
          f"{rel:.3e} (trial {trial}, component {names[k]}), tolerance {GRADCHECK_RTOL:g}")
    if failures:
        print(f"FAIL: worst component {names[k]} in trial {trial}, relative error {rel:.3e}",
              file=sys.stderr)
        return EXIT_VERIFY_FAILED
    print("PASS")
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="lmreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lmreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (flags override it)")
    common.add_argument("--seed", type=int, help="base random seed (default 42)")

    opt = argparse.ArgumentParser(add_help=False)
    opt.add_argument("--preset", choices=sorted(PRESETS),
                     help="optimizer preset: 'paper' (Adam, lr 1e-3, 100 iters) or "
                          "'converge' (L-BFGS, 2000 iters, tol 1e-10)")
    opt.add_argument("--optimizer", choices=["adam", "lbfgs"], help="override the preset's method")
    opt.add_argument("--lr", type=float, help="learning rate (Adam) or trial step (L-BFGS)")
    opt.add_argument("--iters", type=int, help="maximum iterations")
    opt.add_argument("--tol", type=float, help="stop when |loss change| < TOL")

    hm = argparse.ArgumentParser(add_help=False)
    hm.add_argument("--tau", type=float, help="soft-argmax temperature (default 1.0)")
    hm.add_argument("--sigma", type=float, help="heatmap fixture std in px (default 2.0)")
    hm.add_argument("--net-size", type=int, help="heatmap resolution in px (default 512)")

    jobs = argparse.ArgumentParser(add_help=False)
    jobs.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("synth", parents=[common, hm, jobs],
                       help="generate seeded synthetic registration cases")
    p.add_argument("--count", type=int, default=1, help="number of cases (default 1)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rot-range", type=float, help="rotation half-range in degrees (default 45)")
    p.add_argument("--trans-range", type=float, help="translation half-range in mm (default 50)")
    p.add_argument("--noise", type=float, help="Gaussian pixel noise std on observations (default 0)")
    p.add_argument("--landmarks3d-voxels", type=Path,
                   help="3D landmark CSV in voxel coordinates (default: packaged pelvis)")
    p.add_argument("--heatmaps", action="store_true", help="also write <case>.hmap fixtures; poses are then resampled until "
                        "every landmark lies in the central 90%% of the detector")
    p.add_argument("--export-landmarks", action="store_true",
                   help="also write gt/, observed/ and landmarks3d/ CSV files")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("register", parents=[common, opt, hm, jobs],
                       help="estimate poses from cases or landmark files")
    p.add_argument("cases", nargs="*", help="case JSON files or directories of them")
    p.add_argument("--landmarks3d", help="world-frame 3D landmark CSV (mm)")
    p.add_argument("--landmarks2d", help="registration-frame 2D landmark CSV (px)")
    p.add_argument("--from-heatmaps", action="store_true",
                   help="decode observations from <case>.hmap by soft-argmax")
    p.add_argument("--out", required=True,
                   help="output directory for <stem>.run.json, reprojected/ and observed/")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("eval", help="per-landmark RMSE of predicted vs ground-truth landmark CSVs")
    p.add_argument("pred_dir", help="directory of predicted <stem>.csv files")
    p.add_argument("gt_dir", help="directory of ground-truth <stem>.csv files")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="compare the analytic gradient against central differences")
    p.add_argument("--trials", type=int, default=100, help="random problems to check (default 100)")
    p.add_argument("--inject-gradient-error", type=float, default=0.0, metavar="FRACTION",
                   help="test hook: scale the analytic gradient by (1 + FRACTION)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"lmreg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"lmreg {args.command}: error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
