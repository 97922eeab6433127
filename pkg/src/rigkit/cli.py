"""Command-line interface.

Every command prints a ``key: value`` report. Exit codes: 0 success,
1 data error (bad file contents, failed check), 2 usage error (bad flags,
missing files).
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
from contextlib import redirect_stderr
from dataclasses import dataclass, field

import numpy as np

from . import bvh as bvhmod
from .clipio import ClipFile, atomic_write_text, clip_from_dict, load_clip, load_reference, save_clip
from .errors import RigkitError
from .kernels.gradcheck import KERNELS, run_gradcheck
from .kernels.graph import build_graph_relations, dump_masks
from .kinematics import (
    AxisConvention,
    analytic_ik_reference,
    decode_motion,
    forward_kinematics,
    rerig_axis_convention,
)
from .metrics import MixSchedule, evaluate, mixed_pose_probability, mpjpe, mpjve
from .rotations import geodesic_angle, swing_twist
from .skeleton import (
    EPS_POS,
    EPS_ROT_DEG,
    check_clip_shapes,
    detect_static_joints,
    validate_skeleton,
)
from .synthetic import GenConfig, gen_axis_convention, gen_motion, gen_skeleton

OK, DATA_ERROR, USAGE_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class CommandResult:
    exit_code: int
    report: str
    outputs: list = field(default_factory=list)


def _num(x):
    x = float(x)
    if not np.isfinite(x):
        return "nan"
    return repr(float(f"{x:.12g}"))


def _report(pairs):
    return "\n".join(f"{k}: {v}" for k, v in pairs) + "\n"


def _existing(path, flag):
    if path is None:
        raise UsageError(f"{flag} is required")
    if not os.path.isfile(path):
        raise UsageError(f"{flag}: no such file {path!r}")
    return path


def _joints_range(text):
    parts = [int(p) for p in str(text).split(",")]
    return (parts[0], parts[-1])


def _positions_of(clip):
    if clip.pose is not None:
        return clip.pose
    if clip.motion is None:
        raise RigkitError("clip has neither positions nor rotations")
    return forward_kinematics(clip.skeleton, clip.motion)[0]


# --------------------------------------------------------------------------
# commands


def cmd_validate(args):
    clip = load_clip(_existing(args.input, "--input"))
    report = validate_skeleton(clip.skeleton)
    pairs = [("joints", clip.skeleton.joint_count), ("frames", clip.frames)]
    problems = [str(v) for v in report.violations]
    if report.ok:
        for name, c in (("rotations", clip.motion), ("positions", clip.pose)):
            if c is None:
                continue
            try:
                check_clip_shapes(clip.skeleton, c)
                if name == "rotations":
                    decode_motion(c)
                    if not np.all(np.isfinite(c.root_translation)):
                        problems.append("rotations: root translation is not finite")
                elif not np.all(np.isfinite(c.positions[:, c.joint_mask])):
                    problems.append("positions: non-finite values")
            except RigkitError as exc:
                problems.append(f"{name}: {exc}")
        if not problems and clip.motion is not None and clip.pose is not None:
            pos_s, rot_s = detect_static_joints(clip.skeleton, clip.pose, clip.motion, args.eps_pos, args.eps_rot)
            pairs += [("position_static", int(pos_s.sum())), ("rotation_static", int(rot_s.sum()))]
    pairs.append(("status", "ok" if not problems else "invalid"))
    pairs += [("violation", p) for p in problems]
    return CommandResult(DATA_ERROR if problems else OK, _report(pairs))


def cmd_fk(args):
    clip = load_clip(_existing(args.input, "--input"))
    if clip.motion is None:
        raise RigkitError("input clip has no rotations")
    pose, _ = forward_kinematics(clip.skeleton, clip.motion)
    pairs = [("joints", clip.skeleton.joint_count), ("frames", clip.frames)]
    if clip.pose is not None:
        delta = np.linalg.norm(pose.positions - clip.pose.positions, axis=-1)[:, pose.joint_mask]
        pairs.append(("max_position_delta", _num(delta.max() if delta.size else 0.0)))
    skeleton = clip.skeleton
    if args.detect_static:
        pos_s, rot_s = detect_static_joints(skeleton, pose, clip.motion, args.eps_pos, args.eps_rot)
        skeleton = skeleton.with_static_flags(pos_s, rot_s)
        pairs += [("position_static", int(pos_s.sum())), ("rotation_static", int(rot_s.sum()))]
    outputs = []
    if args.output:
        save_clip(args.output, ClipFile(skeleton, clip.motion, pose, clip.meta))
        outputs.append(args.output)
    return CommandResult(OK, _report(pairs), outputs)


def cmd_ik(args):
    clip = load_clip(_existing(args.input, "--input"))
    if args.reference is None:
        raise UsageError("--reference is required (a reference file or a clip with --ref-frame)")
    ref = load_reference(_existing(args.reference, "--reference"), args.ref_frame)
    pose = _positions_of(clip)
    motion = analytic_ik_reference(clip.skeleton, pose, ref)
    fk_pose, _ = forward_kinematics(clip.skeleton, motion)
    err = np.linalg.norm(fk_pose.positions - pose.positions, axis=-1)[:, pose.joint_mask]
    pairs = [
        ("joints", clip.skeleton.joint_count),
        ("frames", pose.frames),
        ("roundtrip_mpjpe", _num(err.mean())),
        ("roundtrip_max_error", _num(err.max())),
    ]
    if clip.motion is not None:
        ang = geodesic_angle(decode_motion(clip.motion), decode_motion(motion))[:, pose.joint_mask]
        pairs.append(("rotation_delta_deg", _num(np.degrees(ang.mean()))))
    outputs = []
    if args.output:
        save_clip(args.output, ClipFile(clip.skeleton, motion, fk_pose, clip.meta))
        outputs.append(args.output)
    return CommandResult(OK, _report(pairs), outputs)


def cmd_metrics(args):
    pred = load_clip(_existing(args.pred, "--pred"))
    gt = load_clip(_existing(args.gt, "--gt"))
    if pred.motion is None or gt.motion is None:
        # position-only clips: MPJPE / MPJVE alone
        pp, gp = _positions_of(pred), _positions_of(gt)
        if pp.positions.shape != gp.positions.shape:
            raise RigkitError(f"shape mismatch: {pp.positions.shape} vs {gp.positions.shape}")
        mask = pp.joint_mask & gp.joint_mask
        pairs = [("mpjpe_cm", _num(mpjpe(pp, gp, mask)))]
        if pp.frames >= 2:
            pairs.append(("mpjve_cm", _num(mpjve(pp, gp, mask))))
        return CommandResult(OK, _report(pairs))
    if pred.motion.rot6d.shape != gt.motion.rot6d.shape:
        raise RigkitError(f"shape mismatch: {pred.motion.rot6d.shape} vs {gt.motion.rot6d.shape}")
    rep = evaluate(_positions_of(pred), _positions_of(gt), pred.motion, gt.motion)
    pairs = [
        ("mpjpe_cm", _num(rep.mpjpe_cm)),
        ("mpjve_cm", _num(rep.mpjve_cm)),
        ("ang_err_deg", _num(rep.ang_err_deg)),
        ("angv_err_deg", _num(rep.angv_err_deg)),
    ]
    for key in ("per_joint_mpjpe_cm", "per_joint_ang_err_deg"):
        pairs.append((key, " ".join(_num(v) for v in getattr(rep, key))))
    return CommandResult(OK, _report(pairs))


def _load_skeleton_and_mask(path):
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RigkitError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(d, dict) and "skeleton" not in d and "parents" in d:
        d = {"skeleton": d}
    clip = clip_from_dict(d)
    mask = None
    for c in (clip.motion, clip.pose):
        if c is not None:
            mask = c.joint_mask
    return clip.skeleton, mask


def cmd_masks(args):
    if args.layers < 0:
        raise UsageError("--layers must be >= 0")
    skeleton, mask = _load_skeleton_and_mask(_existing(args.input, "--input"))
    text = dump_masks(build_graph_relations(skeleton), args.layers, mask)
    outputs = []
    if args.output:
        atomic_write_text(args.output, text)
        outputs.append(args.output)
    return CommandResult(OK, text, outputs)


def cmd_demo_ambiguity(args):
    config = GenConfig(seed=args.seed, joints=_joints_range(args.joints), frames=args.frames)
    skeleton = gen_skeleton(config)
    motion = gen_motion(skeleton, config)
    conv = AxisConvention.identity(skeleton.joint_count) if args.identity else gen_axis_convention(skeleton, args.seed)
    skel2, motion2 = rerig_axis_convention(skeleton, motion, conv)
    p1, _ = forward_kinematics(skeleton, motion)
    p2, _ = forward_kinematics(skel2, motion2)
    pos_delta = np.linalg.norm(p1.positions - p2.positions, axis=-1).max()
    rot_delta = np.degrees(geodesic_angle(decode_motion(motion), decode_motion(motion2)).mean())
    pairs = [
        ("seed", args.seed),
        ("joints", skeleton.joint_count),
        ("frames", motion.frames),
        ("convention", "identity" if args.identity else "random"),
        ("position_delta", _num(pos_delta)),
        ("rotation_delta_deg", _num(rot_delta)),
    ]
    single = [j for j in range(skeleton.joint_count) if len(skeleton.children[j]) == 1]
    pairs.append(("single_child_joints", len(single)))
    for j in single:
        bone = skeleton.offsets[skeleton.children[j][0]]
        n = np.linalg.norm(bone)
        if n == 0:
            continue
        st = swing_twist(conv.matrices[j], bone / n)
        pairs.append((f"joint_{j}_twist_deg", _num(np.degrees(geodesic_angle(np.eye(3), st.twist)))))
        pairs.append((f"joint_{j}_swing_deg", _num(np.degrees(geodesic_angle(np.eye(3), st.swing)))))
    return CommandResult(OK, _report(pairs))


def cmd_gradcheck(args):
    if args.kernel not in KERNELS:
        raise UsageError(f"unknown kernel {args.kernel!r}; choose from {', '.join(sorted(KERNELS))}")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    res = run_gradcheck(args.kernel, args.seeds)
    pairs = [
        ("kernel", res.kernel),
        ("seeds", res.seeds),
        ("max_rel_error", f"{res.max_error:.6e}"),
        ("tolerance", f"{res.tolerance:.0e}"),
        ("status", "pass" if res.passed else "fail"),
    ]
    return CommandResult(OK if res.passed else DATA_ERROR, _report(pairs))


def cmd_schedule(args):
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    try:
        sched = MixSchedule(args.p_start, args.p_end, args.warmup)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pairs = [("p_start", _num(sched.p_start)), ("p_end", _num(sched.p_end)), ("warmup_epochs", sched.warmup_epochs)]
    pairs += [(f"epoch {e}", _num(mixed_pose_probability(e, sched))) for e in range(args.epochs + 1)]
    return CommandResult(OK, _report(pairs))


def cmd_convert(args):
    src = _existing(args.input, "--input")
    if not args.output:
        raise UsageError("--output is required")
    src_bvh = src.lower().endswith(".bvh")
    dst_bvh = args.output.lower().endswith(".bvh")
    if src_bvh == dst_bvh:
        raise UsageError("convert goes from .bvh to a clip file or back")
    scale = args.unit_scale
    if not np.isfinite(scale) or scale <= 0:
        raise UsageError("--unit-scale must be positive")
    try:
        if args.axis_remap:
            bvhmod.axis_remap_matrix(args.axis_remap)
        if args.channel_order:
            bvhmod._check_order(args.channel_order)
    except (ValueError, RigkitError) as exc:
        raise UsageError(str(exc)) from None

    if src_bvh:
        doc = bvhmod.read_bvh(src)
        skeleton, motion = bvhmod.bvh_to_model(doc)
        skeleton, motion = bvhmod.remap_axes(skeleton, motion, args.axis_remap, scale)
        orders = [bvhmod._rotation_order(j.channels, j.name) for j in doc.joints]
        order = next((o for o in orders if o), "ZXY")
        meta = {"source": "bvh", "channel_order": order, "frame_time": doc.frame_time}
        save_clip(args.output, ClipFile(skeleton, motion, None, meta))
        pairs = [("joints", skeleton.joint_count), ("frames", motion.frames), ("channel_order", order)]
    else:
        clip = load_clip(src)
        if clip.motion is None:
            raise RigkitError("clip has no rotations to export")
        skeleton, motion = bvhmod.remap_axes(clip.skeleton, clip.motion, args.axis_remap, scale)
        order = args.channel_order or clip.meta.get("channel_order", "ZXY")
        frame_time = float(clip.meta.get("frame_time", bvhmod.DEFAULT_FRAME_TIME))
        doc, locked = bvhmod.model_to_bvh(skeleton, motion, order, frame_time, return_flags=True)
        atomic_write_text(args.output, bvhmod.write_bvh(doc))
        pairs = [
            ("joints", len(doc.joints)),
            ("frames", doc.frame_count),
            ("channel_order", order.upper()),
            ("gimbal_lock_entries", int(locked.sum())),
        ]
    return CommandResult(OK, _report(pairs), [args.output])


def cmd_generate(args):
    config = GenConfig(
        seed=args.seed,
        joints=_joints_range(args.joints),
        frames=args.frames,
        smoothness=args.smoothness,
    )
    skeleton = gen_skeleton(config)
    motion = gen_motion(skeleton, config)
    pose, _ = forward_kinematics(skeleton, motion)
    outputs = []
    if args.output:
        save_clip(args.output, ClipFile(skeleton, motion, pose, {"seed": args.seed}))
        outputs.append(args.output)
    pairs = [("seed", args.seed), ("joints", skeleton.joint_count), ("frames", motion.frames)]
    return CommandResult(OK, _report(pairs), outputs)


# --------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="rigkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("validate", cmd_validate, "check a clip file")
    p.add_argument("--input")
    p.add_argument("--eps-pos", type=float, default=EPS_POS)
    p.add_argument("--eps-rot", type=float, default=EPS_ROT_DEG)

    p = add("fk", cmd_fk, "forward kinematics of a clip")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--detect-static", action="store_true", help="write static-joint flags into the output skeleton")
    p.add_argument("--eps-pos", type=float, default=EPS_POS)
    p.add_argument("--eps-rot", type=float, default=EPS_ROT_DEG)

    p = add("ik", cmd_ik, "reference-anchored analytical pose-to-rotation")
    p.add_argument("--input")
    p.add_argument("--reference")
    p.add_argument("--ref-frame", type=int)
    p.add_argument("--output")

    p = add("metrics", cmd_metrics, "MPJPE / MPJVE / angle metrics between two clips")
    p.add_argument("--pred", "--input", dest="pred")
    p.add_argument("--gt", "--reference", dest="gt")

    p = add("masks", cmd_masks, "dump alternating local/global attention masks")
    p.add_argument("--input")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--output")

    p = add("demo-ambiguity", cmd_demo_ambiguity, "re-rig a random motion under new axes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--joints", default="10,30")
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--identity", action="store_true")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of a kernel")
    p.add_argument("--kernel", required=True)
    p.add_argument("--seeds", type=int, default=50)

    p = add("schedule", cmd_schedule, "mixed-pose probability per epoch")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--p-start", type=float, default=0.1)
    p.add_argument("--p-end", type=float, default=1.0)
    p.add_argument("--warmup", type=int, default=30)

    p = add("convert", cmd_convert, "BVH <-> clip file")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--channel-order")
    p.add_argument("--axis-remap")
    p.add_argument("--unit-scale", type=float, default=1.0)

    p = add("generate", cmd_generate, "write a synthetic clip")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--joints", default="5,30")
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--smoothness", type=float, default=0.8)
    p.add_argument("--output")
    return parser


def run(argv=None):
    parser = build_parser()
    err = io.StringIO()
    try:
        with redirect_stderr(err):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        code = USAGE_ERROR if exc.code not in (0, None) else OK
        return CommandResult(code, err.getvalue())
    try:
        return args.func(args)
    except UsageError as exc:
        return CommandResult(USAGE_ERROR, _report([("error", str(exc))]))
    except (RigkitError, ValueError, OSError) as exc:
        return CommandResult(DATA_ERROR, _report([("error", str(exc))]))


def main(argv=None):
    result = run(argv)
    stream = sys.stderr if result.exit_code == USAGE_ERROR else sys.stdout
    stream.write(result.report)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
