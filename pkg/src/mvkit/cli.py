"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
(training divergence or a failed gradient check).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import List, Optional

import jsonschema
import numpy as np

from . import __version__
from .augmentation import AugmentConfig, augment_dataset
from .config import ConfigError, RunConfig, load_config
from .metrics import JointSequence, MetricError, evaluate_joints
from .motion_io import FILE_REPRESENTATIONS, MotionFileError, read_motion, write_motion
from .motion_vae import (
    TrainingDivergedError,
    VaeConfig,
    VaeError,
    VaeModel,
    gradient_check,
    load_model,
    reconstruct_sequence,
    save_model,
    train,
    training_windows,
)
from .rotations import RotationError
from .sequence import SequenceError
from .skeleton import (
    SkeletonError,
    bundled_skeleton_path,
    default_skeleton,
    fk_batch,
    fk_sequence,
    load_skeleton,
    save_skeleton,
)
from .smoothing import WindowError, WindowIndex, WindowSpec, slerp_average_filter, sliding_windows, stitch_windows
from .synthetic import KINDS, generate_synthetic

log = logging.getLogger("mvkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@lru_cache(maxsize=None)
def report_schemas() -> dict:
    text = (resources.files("mvkit") / "data" / "report_schemas.json").read_text(encoding="utf-8")
    return json.loads(text)


def emit(report: dict, kind: str, out: Optional[str] = None) -> None:
    """Validate ``report`` against the bundled schema, then print or write it."""
    jsonschema.validate(report, report_schemas()[kind])
    text = json.dumps(report, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _run_config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _skeleton(path: Optional[str]):
    return load_skeleton(path) if path else default_skeleton()


def _motion_path(out_dir: Path, stem: str, fmt: Optional[str]) -> Path:
    return out_dir / f"{stem}.{'json' if fmt in (None, 'json') else 'mvkt'}"


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _motion_report(command, paths, seqs, **extra) -> dict:
    rep = {
        "command": command,
        "outputs": [str(p) for p in paths],
        "frames": [s.num_frames for s in seqs],
        "names": [s.name for s in seqs],
    }
    rep.update(extra)
    return rep


# commands


def cmd_synth(args) -> int:
    params = dict(
        frames=args.frames, fps=args.fps, joints=args.joints, amplitude=args.amplitude, frequency=args.frequency,
        phase=args.phase, joint=args.joint, axis=tuple(args.axis), key_interval=args.key_interval,
        root_speed=args.root_speed,
    )
    seq = generate_synthetic(args.kind, params, args.seed or 0)
    write_motion(seq, args.out, args.format)
    emit(_motion_report("synth", [args.out], [seq]), "motion_output")
    return EXIT_OK


def cmd_convert(args) -> int:
    seq = read_motion(args.input)
    write_motion(seq, args.out, args.format, args.representation, args.precision)
    emit(_motion_report("convert", [args.out], [seq]), "motion_output")
    return EXIT_OK


def cmd_augment(args) -> int:
    rc = _run_config(args)
    base = rc.augment
    cfg = AugmentConfig(
        speed_factors=args.speed if args.speed is not None else base.speed_factors,
        enable_flip=args.flip or base.enable_flip,
        root_rotation_samples=args.root_rotations if args.root_rotations is not None else base.root_rotation_samples,
        rng_seed=args.seed if args.seed is not None else base.rng_seed,
    )
    seqs = [read_motion(p) for p in args.inputs]
    skel = _skeleton(args.skeleton or rc.skeleton)
    out = augment_dataset(seqs, cfg, skel)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, seq in enumerate(out):
        path = _motion_path(out_dir, f"aug_{k:04d}", args.format)
        write_motion(seq, path, args.format)
        paths.append(path)
    emit(_motion_report("augment", paths, out), "motion_output")
    return EXIT_OK


def cmd_smooth(args) -> int:
    rc = _run_config(args)
    ratio = args.ratio if args.ratio is not None else rc.smoothing_ratio
    seq = slerp_average_filter(read_motion(args.input), ratio)
    write_motion(seq, args.out, args.format)
    emit(_motion_report("smooth", [args.out], [seq]), "motion_output")
    return EXIT_OK


def cmd_window(args) -> int:
    rc = _run_config(args)
    width = args.width if args.width is not None else rc.window.width
    stride = args.stride if args.stride is not None else (rc.window.stride if args.width is None else 0)
    seq = read_motion(args.input)
    windows, index = sliding_windows(seq, WindowSpec(width, stride))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, w in enumerate(windows):
        path = _motion_path(out_dir, f"win_{k:04d}", args.format)
        write_motion(w, path, args.format, representation="quaternion", precision=64)
        paths.append(path)
    doc = index.to_json()
    doc["windows"] = [p.name for p in paths]
    index_path = out_dir / "index.json"
    index_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    emit(_motion_report("window", paths, windows, index=str(index_path)), "motion_output")
    return EXIT_OK


def cmd_stitch(args) -> int:
    index_path = Path(args.index)
    try:
        doc = json.loads(index_path.read_text(encoding="utf-8"))
        index = WindowIndex.from_json(doc)
        names = doc["windows"]
    except (KeyError, TypeError, ValueError) as exc:
        raise WindowError(f"{index_path}: malformed window index ({exc})") from None
    windows = [read_motion(index_path.parent / n) for n in names]
    seq = stitch_windows(windows, index, args.policy)
    write_motion(seq, args.out, args.format)
    emit(_motion_report("stitch", [args.out], [seq]), "motion_output")
    return EXIT_OK


def _vae_config(args, rc: RunConfig) -> VaeConfig:
    base = rc.vae.to_dict()
    overrides = dict(
        window=args.window, latent_dim=args.latent, encoder_hidden=args.hidden, decoder_hidden=args.hidden,
        kl_weight=args.kl_weight, learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
        rng_seed=args.seed,
    )
    base.update({k: v for k, v in overrides.items() if v is not None})
    return VaeConfig(**base)


def cmd_vae_train(args) -> int:
    rc = _run_config(args)
    cfg = _vae_config(args, rc)
    seqs = [read_motion(p) for p in args.data]
    for p, s in zip(args.data, seqs):
        if s.joint_count * 6 != cfg.input_dim:
            raise VaeError(f"{p}: {s.joint_count} joints does not match input_dim {cfg.input_dim}")
    windows = training_windows(seqs, cfg.window, args.stride)
    model = VaeModel.init(cfg)
    result = train(model, windows, cfg, callback=lambda e, l: log.info("epoch %d loss %.6g", e, l))
    save_model(result.model, args.out)
    emit(
        {
            "command": "vae-train",
            "model": str(args.out),
            "windows": len(windows),
            "steps": result.steps,
            "loss_history": result.loss_history,
            "recon_history": result.recon_history,
            "kl_history": result.kl_history,
            "config": cfg.to_dict(),
        },
        "vae_train",
        args.report,
    )
    return EXIT_OK


def cmd_vae_reconstruct(args) -> int:
    model = load_model(args.model)
    seq = reconstruct_sequence(model, read_motion(args.input))
    write_motion(seq, args.out, args.format)
    emit(_motion_report("vae-reconstruct", [args.out], [seq]), "motion_output")
    return EXIT_OK


def random_small_model(seed: int, hidden: int, window: int, input_dim: int, latent: int):
    """A randomly initialised small model with perturbed biases, plus a random batch."""
    cfg = VaeConfig(
        window=window, input_dim=input_dim, latent_dim=latent, encoder_hidden=hidden, decoder_hidden=hidden,
        mlp_hidden=(hidden, hidden), rng_seed=seed,
    )
    model = VaeModel.init(cfg)
    rng = np.random.default_rng(seed)
    for k in model.params:
        model.params[k] = model.params[k] + 0.3 * rng.standard_normal(model.params[k].shape)
    batch = rng.standard_normal((2, window, input_dim))
    return model, batch


def cmd_vae_gradcheck(args) -> int:
    base = args.seed or 0
    per_model, worst = [], 0.0
    for i in range(args.models):
        model, batch = random_small_model(base + i, args.hidden, args.window, args.input_dim, args.latent)
        rep = gradient_check(model, batch, tolerance=args.tolerance, seed=base + i)
        worst = max(worst, rep.max_rel_error)
        per_model.append(
            dict(seed=base + i, max_rel_error=rep.max_rel_error, worst_param=rep.worst_param,
                 entries_checked=rep.entries_checked)
        )
    passed = worst < args.tolerance
    emit(
        dict(command="vae-gradcheck", models=args.models, tolerance=args.tolerance, max_rel_error=worst,
             passed=passed, per_model=per_model),
        "vae_gradcheck",
        args.out,
    )
    if not passed:
        raise NumericFailure(f"gradient check failed: max relative error {worst:.3g} >= {args.tolerance}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    rc = _run_config(args)
    skel = _skeleton(args.skeleton or rc.skeleton)
    pred, gt = read_motion(args.pred), read_motion(args.gt)
    if pred.fps != gt.fps:
        raise MetricError(f"fps mismatch: {args.pred} has {pred.fps}, {args.gt} has {gt.fps}")
    if pred.quats.shape != gt.quats.shape:
        raise MetricError(f"layout mismatch: {args.pred} is {pred.quats.shape[:2]}, {args.gt} is {gt.quats.shape[:2]}")
    report = evaluate_joints(
        JointSequence(fk_sequence(skel, pred), pred.fps),
        JointSequence(fk_sequence(skel, gt), gt.fps),
        per_frame=bool(args.per_frame or rc.per_frame),
    )
    emit(report.to_json(), "evaluate", args.out)
    if args.per_frame:
        Path(args.per_frame).write_text(json.dumps(report.per_frame) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_skeleton_check(args) -> int:
    if args.write_default:
        save_skeleton(default_skeleton(), args.write_default)
    source = args.skeleton or str(bundled_skeleton_path())
    skel = load_skeleton(source)
    J = skel.joint_count
    pos = fk_batch(skel, np.tile([1.0, 0.0, 0.0, 0.0], (1, J, 1)))[0]
    mirrored = pos[list(skel.mirror)] * np.array([-1.0, 1.0, 1.0])
    pairs = [[j, m] for j, m in enumerate(skel.mirror) if j < m]
    emit(
        dict(command="skeleton-check", source=str(source), joint_count=J, valid=True, mirror_pairs=pairs,
             has_shape_basis=skel.shape_basis is not None,
             rest_pose_symmetric=bool(np.allclose(mirrored, pos, atol=1e-12))),
        "skeleton_check",
        args.out,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="YAML run configuration")
    common.add_argument("--format", choices=("json", "bin"), default=None,
                        help="motion output encoding (default: from extension)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="mvkit", description="Human-motion numerics toolkit.")
    parser.add_argument("--version", action="version", version=f"mvkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic motion")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--frames", type=int, default=90)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--joints", type=int, default=24)
    p.add_argument("--amplitude", type=float, default=0.5, help="radians")
    p.add_argument("--frequency", type=float, default=1.0, help="Hz")
    p.add_argument("--phase", type=float, default=0.0)
    p.add_argument("--joint", type=int, default=1)
    p.add_argument("--axis", type=_floats, default=[1.0, 0.0, 0.0])
    p.add_argument("--key-interval", type=int, default=10)
    p.add_argument("--root-speed", type=float, default=0.0, help="m/s along +z")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", parents=[common], help="re-encode a motion file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--representation", choices=FILE_REPRESENTATIONS, default="axis_angle")
    p.add_argument("--precision", type=int, choices=(32, 64), default=32, help="binary payload float width")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", parents=[common], help="speed / flip / root-rotation expansion")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speed", type=_floats, default=None, help="comma-separated speed factors")
    p.add_argument("--flip", action="store_true")
    p.add_argument("--root-rotations", type=int, default=None)
    p.add_argument("--skeleton", default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("smooth", parents=[common], help="slerp average filter")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=float, default=None)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("window", parents=[common], help="cut into fixed-width windows")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("stitch", parents=[common], help="reassemble windows")
    p.add_argument("--index", required=True, help="index.json written by 'window'")
    p.add_argument("--policy", choices=("take_first", "take_last", "slerp_blend"), default="take_first")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("vae-train", parents=[common], help="train a motion VAE")
    p.add_argument("--data", nargs="+", required=True)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--report", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--latent", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--kl-weight", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.set_defaults(func=cmd_vae_train)

    p = sub.add_parser("vae-reconstruct", parents=[common], help="encode/decode a sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vae_reconstruct)

    p = sub.add_parser("vae-gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--window", type=int, default=4)
    p.add_argument("--input-dim", type=int, default=12)
    p.add_argument("--latent", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_vae_gradcheck)

    p = sub.add_parser("evaluate", parents=[common], help="MPJPE / PA-MPJPE / acceleration error")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--skeleton", default=None)
    p.add_argument("--per-frame", default=None, help="also write per-frame arrays to this path")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("skeleton-check", parents=[common], help="validate a skeleton file")
    p.add_argument("--skeleton", default=None, help="default: the bundled SMPL-topology skeleton")
    p.add_argument("--write-default", default=None, help="write the default skeleton to this path first")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_skeleton_check)
    return parser


DATA_ERRORS = (
    MotionFileError, SkeletonError, SequenceError, ConfigError, WindowError, VaeError, RotationError, MetricError,
    OSError, ValueError, jsonschema.ValidationError,
)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (NumericFailure, TrainingDivergedError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


cli = main

if __name__ == "__main__":
    sys.exit(main())
