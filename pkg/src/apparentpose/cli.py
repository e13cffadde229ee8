"""Command line entry point: ``apparentpose <subcommand> ...``.

Angles are degrees on the command line and radians everywhere inside.
Exit codes: 0 success, 1 usage or validation error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bench
from .augmentation import AugmentationPolicy, conjugation_check, perturb_bbox, relabel_bbox, relabel_pose, sample_augmentation
from .dataset_io import (
    DatasetManifest,
    FrameRecord,
    PredictionRecord,
    SchemaConfig,
    load_annotations,
    load_bboxes,
    load_camera,
    load_predictions,
    save_manifest,
    save_predictions,
    save_report,
)
from .errors import DegenerateBox, PoseToolkitError, SpecError
from .geometry import CameraModel
from .harness import OracleNoisyPredictor, PipelineConfig, SyntheticSpec, generate_synthetic, run_pipeline
from .streams import DEFAULT_SEED, derive_rng
from .targets import decode_pose, encode_pose

log = logging.getLogger("apparentpose")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _existing(path: str | None, what: str) -> str | None:
    if path is not None and not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def _camera(args, required=True) -> CameraModel | None:
    if args.camera is None:
        if required:
            raise UsageError("a camera config is required (--camera <path>)")
        return None
    return load_camera(_existing(args.camera, "camera config"), args.alpha)


def _schema(value: str | None) -> SchemaConfig:
    if value is None:
        return SchemaConfig()
    if Path(value).is_file():
        return SchemaConfig.load(value)
    try:
        return SchemaConfig.preset(value)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _manifest(args, path) -> DatasetManifest:
    _existing(path, "annotation file")
    cam = _camera(args, required=False)
    try:
        return load_annotations(path, _schema(getattr(args, "schema", None)), cam)
    except PoseToolkitError as exc:
        if cam is None and "no camera" in str(exc):
            raise UsageError(f"{exc} (pass --camera <path>)") from None
        raise


def _report_frame_errors(errors: dict[str, str]) -> int:
    if not errors:
        return EXIT_OK
    print(f"{len(errors)} frame(s) failed:", file=sys.stderr)
    for fid, msg in errors.items():
        print(f"  {fid}: {msg}", file=sys.stderr)
    return EXIT_DATA


def cmd_encode(args) -> int:
    manifest = _manifest(args, args.annotations)
    boxes = load_bboxes(_existing(args.boxes, "box file"), manifest.camera) if args.boxes else None
    records, errors = [], {}
    for frame in manifest.frames:
        box = boxes.get(frame.frame_id) if boxes is not None else frame.bbox
        if box is None:
            errors[frame.frame_id] = "no bounding box"
            continue
        try:
            records.append(PredictionRecord(frame.frame_id, target=encode_pose(frame.gt_pose, manifest.camera, box)))
        except PoseToolkitError as exc:
            errors[frame.frame_id] = f"{type(exc).__name__}: {exc}"
    save_predictions(records, args.out)
    log.info("encoded %d frame(s) to %s", len(records), args.out)
    return _report_frame_errors(errors)


def cmd_decode(args) -> int:
    _existing(args.targets, "target file")
    manifest = _manifest(args, args.manifest) if args.manifest else None
    cam = _camera(args, required=manifest is None) or manifest.camera
    if args.boxes:
        boxes = load_bboxes(_existing(args.boxes, "box file"), cam)
    elif manifest is not None:
        boxes = {f.frame_id: f.bbox for f in manifest.frames if f.bbox is not None}
    else:
        raise UsageError("boxes are required (--boxes <path> or --manifest <path>)")
    preds = load_predictions(args.targets, manifest.by_id().keys() if manifest else None)
    if not preds:
        raise UsageError(f"{args.targets} contains no records")
    out, errors = [], {}
    for rec in preds:
        if rec.pose is not None:
            out.append(rec)
            continue
        box = boxes.get(rec.frame_id)
        if box is None:
            errors[rec.frame_id] = "no bounding box"
            continue
        try:
            out.append(PredictionRecord(rec.frame_id, pose=decode_pose(rec.target, cam, box)))
        except PoseToolkitError as exc:
            errors[rec.frame_id] = f"{type(exc).__name__}: {exc}"
    save_predictions(out, args.out)
    return _report_frame_errors(errors)


def cmd_augment(args) -> int:
    if (args.theta is None) == (args.policy is None):
        raise UsageError("exactly one of --theta or --policy is required")
    manifest = _manifest(args, args.manifest)
    cam = manifest.camera
    frames, dropped = [], []
    if args.theta is not None:
        theta = math.radians(args.theta)
        meta = {"theta_deg": args.theta}
    else:
        try:
            policy = AugmentationPolicy.load(_existing(args.policy, "policy file"))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid policy: {exc}") from None
        seed = args.seed if args.seed is not None else policy.seed
        meta = {"policy": policy.to_dict(), "seed": seed}
    for frame in manifest.frames:
        box = frame.bbox
        if args.theta is None:
            rng = derive_rng(seed, "augment", frame.frame_id)
            theta = sample_augmentation(policy, rng)
        pose = frame.gt_pose
        try:
            if theta is not None:
                pose = relabel_pose(pose, theta)
                box = relabel_bbox(box, theta, cam) if box is not None else None
            if args.theta is None and box is not None and policy.bbox_perturb_frac > 0:
                box = perturb_bbox(box, cam, rng, policy.bbox_perturb_frac)
        except DegenerateBox:
            dropped.append(frame.frame_id)
            box = None
        frames.append(FrameRecord(frame.frame_id, pose, box, frame.split))
    prov = {k: v for k, v in manifest.provenance.items() if k not in ("count", "hash", "source")}
    prov["augment"] = meta
    save_manifest(DatasetManifest(cam, frames, prov), args.out)
    if dropped:
        log.warning("box discarded for %d frame(s): %s", len(dropped), ", ".join(dropped))
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = _manifest(args, args.manifest)
    try:
        cfg = PipelineConfig.load(_existing(args.config, "pipeline config")).to_dict() if args.config else {}
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid pipeline config: {exc}") from None
    overrides = {
        "bbox_source": args.bbox_source,
        "noise_u": args.noise_u,
        "noise_r_deg": args.noise_r_deg,
        "perturb_frac": args.perturb_frac,
        "seed": args.seed,
    }
    if args.predictions:
        overrides["predictor"] = f"file:{_existing(args.predictions, 'prediction file')}"
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = PipelineConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid pipeline config: {exc}") from None
    if config.bbox_source.startswith("file:"):
        _existing(config.bbox_source[5:], "box file")
    result = run_pipeline(manifest, config)
    if args.out:
        save_report(result.report, args.out, args.text)
    if args.predictions_out:
        save_predictions(result.predictions, args.predictions_out)
    sys.stdout.write(result.report.to_text() if args.verbose else _summary(result.report))
    return EXIT_OK


def _summary(report) -> str:
    text = report.to_text()
    return text[text.index("\nframes evaluated") + 1 :]


def cmd_check_derivation(args) -> int:
    cam = _camera(args, required=False) or CameraModel.speed()
    if args.fy is not None:
        cam = CameraModel(cam.fx, args.fy, cam.cx, cam.cy, cam.width, cam.height, cam.alpha)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    thetas = [args.theta] if args.theta is not None else [360.0 * i / args.steps for i in range(args.steps)]
    devs = [conjugation_check(cam, math.radians(t)) for t in thetas]
    if args.verbose:
        for t, d in zip(thetas, devs):
            print(f"theta={t:9.4f} deg  max|K^-1 M K - R_z| = {d:.3e}")
    worst = int(np.argmax(devs))
    print(f"camera: fx={cam.fx:.6g} fy={cam.fy:.6g} cx={cam.cx:.6g} cy={cam.cy:.6g} image={cam.width:g}x{cam.height:g}")
    print(f"theta values checked: {len(thetas)}")
    print(f"max deviation: {devs[worst]:.3e} (at theta={thetas[worst]:.4f} deg)")
    return EXIT_OK


def _live_profile(args) -> list[bench.StageProfile]:
    rng = derive_rng(args.seed if args.seed is not None else DEFAULT_SEED, "bench-live")
    manifest = generate_synthetic(SyntheticSpec(count=args.live_frames), rng)
    oracle = OracleNoisyPredictor(manifest)
    cam = manifest.camera
    frames = manifest.frames

    def predict(_):
        return [(f, oracle.predict(f.frame_id, cam, f.bbox)) for f in frames]

    def postprocess(items):
        return [decode_pose(t, cam, f.bbox) for f, t in items]

    profile = bench.measure_stages(
        [("predict (oracle)", predict), ("post-processing", postprocess)],
        repetitions=args.repetitions,
        warmup=args.warmup,
    )
    n = len(frames)
    return [bench.StageProfile(s.name, s.mean_ms / n, s.std_ms / n, s.source) for s in profile]


def cmd_bench(args) -> int:
    if args.live:
        stages = _live_profile(args)
    elif args.profile:
        try:
            stages = bench.load_profile(_existing(args.profile, "stage profile"))
        except (ValueError, KeyError) as exc:
            raise UsageError(f"invalid stage profile: {exc}") from None
    else:
        stages = bench.bundled_profile()
    if not stages:
        raise UsageError("stage profile is empty")
    print(f"{'stage':<24} {'mean [ms]':>10} {'std [ms]':>10}  source")
    for s in stages:
        print(f"{s.name:<24} {s.mean_ms:>10.4g} {s.std_ms:>10.4g}  {s.source}")
    print()
    sys.stdout.write(bench.model_throughput(stages).to_text())
    if args.simulate:
        if args.simulate < 1:
            raise UsageError("--simulate must be >= 1")
        for mode in ("sequential", "pipelined"):
            makespan = bench.simulate_schedules(stages, args.simulate, mode)
            print(f"simulated {mode:<10}: {args.simulate} frames in {makespan:.2f} ms -> {1000.0 * args.simulate / makespan:.2f} FPS")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    cam = _camera(args, required=False) or CameraModel.speed(alpha=args.alpha or 1.6)
    spec = SyntheticSpec(
        count=args.count,
        z_min=args.z_min,
        z_max=args.z_max,
        camera=cam,
        margin_px=args.margin,
        object_extent=args.object_extent,
        box_offset_frac=args.box_offset,
    )
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    try:
        manifest = generate_synthetic(spec, derive_rng(seed, "gen-synthetic"))
    except SpecError as exc:
        raise UsageError(str(exc)) from None
    manifest.provenance["seed"] = seed
    save_manifest(manifest, args.out)
    log.info("wrote %d synthetic frame(s) to %s", len(manifest), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--camera", help="camera config JSON (fx, fy, cx, cy, width, height[, alpha])")
    common.add_argument("--alpha", type=float, help="crop aspect-ratio factor (default 1.6 or the camera file value)")
    common.add_argument("--seed", type=int, help=f"root seed for random streams (default {DEFAULT_SEED})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="apparentpose", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("encode", parents=[common], help="annotations + boxes -> crop-space targets")
    s.add_argument("annotations")
    s.add_argument("--schema", help="schema preset (default, speed, speedplus) or schema JSON")
    s.add_argument("--boxes", help="box JSONL; defaults to boxes embedded in the annotations")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("decode", parents=[common], help="targets + boxes -> full-frame poses")
    s.add_argument("targets")
    s.add_argument("--manifest", help="manifest providing camera and boxes")
    s.add_argument("--schema")
    s.add_argument("--boxes")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("augment", parents=[common], help="relabel poses and boxes for in-plane rotations")
    s.add_argument("manifest")
    s.add_argument("--schema")
    s.add_argument("--theta", type=float, help="fixed rotation angle in degrees")
    s.add_argument("--policy", help="augmentation policy JSON (angles in degrees)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("eval", parents=[common], help="score predictions or the noisy oracle")
    s.add_argument("manifest")
    s.add_argument("--schema")
    s.add_argument("--config", help="pipeline config JSON")
    s.add_argument("--predictions", help="prediction JSONL (default: in-process oracle)")
    s.add_argument("--bbox-source", help="gt, perturbed or file:<path>")
    s.add_argument("--noise-u", type=float, help="oracle noise std on U targets")
    s.add_argument("--noise-r-deg", type=float, help="oracle rotation noise std in degrees")
    s.add_argument("--perturb-frac", type=float, help="box perturbation fraction for --bbox-source perturbed")
    s.add_argument("--out", help="report JSON path")
    s.add_argument("--text", help="text report path (with --out)")
    s.add_argument("--predictions-out", help="write evaluated prediction records here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("check-derivation", parents=[common], help="K^-1 M(theta) K vs R_z(theta) sweep")
    s.add_argument("--steps", type=int, default=360, help="number of theta values over [0, 360) degrees")
    s.add_argument("--theta", type=float, help="check a single angle in degrees")
    s.add_argument("--fy", type=float, help="override fy to probe fx != fy")
    s.set_defaults(func=cmd_check_derivation)

    s = sub.add_parser("bench", parents=[common], help="throughput model and schedule simulation")
    s.add_argument("--profile", help="stage profile JSON (default: bundled Jetson Orin Nano profile)")
    s.add_argument("--simulate", type=int, help="also simulate this many frames in both modes")
    s.add_argument("--live", action="store_true", help="measure the local geometric stages instead")
    s.add_argument("--live-frames", type=int, default=200)
    s.add_argument("--repetitions", type=int, default=20)
    s.add_argument("--warmup", type=int, default=2)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic ground-truth manifest")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--z-min", type=float, default=3.0)
    s.add_argument("--z-max", type=float, default=40.0)
    s.add_argument("--margin", type=float, default=50.0, help="min distance of projected centers from the border, px")
    s.add_argument("--object-extent", type=float, default=1.5, help="object size in meters (sets box size)")
    s.add_argument("--box-offset", type=float, default=0.15, help="max box-center offset as a fraction of box size")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"apparentpose {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PoseToolkitError, OSError) as exc:
        print(f"apparentpose {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"apparentpose {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
