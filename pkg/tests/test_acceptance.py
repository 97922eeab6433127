"""End-to-end acceptance checks, one test per criterion.

Each test records its outcome in ``conftest.ACCEPTANCE`` so the terminal
summary prints one PASS/FAIL line per criterion.
"""
import glob
import math
import os
import time

import numpy as np

import oracles
from conftest import record
from rigkit import cli
from rigkit.bvh import bvh_to_model, documents_equal, model_to_bvh, parse_bvh, read_bvh, write_bvh
from rigkit.errors import BvhError
from rigkit.kernels import build_gl_mask, build_graph_relations
from rigkit.kernels.gradcheck import run_gradcheck
from rigkit.kinematics import analytic_ik_reference, decode_motion, forward_kinematics, rerig_axis_convention
from rigkit.metrics import (
    LossComponents,
    LossWeights,
    angle_error,
    angular_velocity_error,
    combine_losses,
    mixed_pose_probability,
    mpjpe,
    mpjve,
)
from rigkit.rotations import (
    axis_rotation,
    geodesic_angle,
    matrix_to_rot6d,
    random_rotations,
    rot6d_to_matrix,
)
from rigkit.skeleton import ROOT, PoseClip, RotationClip, Skeleton
from rigkit.synthetic import (
    GenConfig,
    gen_axis_convention,
    gen_branching_skeleton,
    gen_motion,
    gen_skeleton,
    reference_from_motion,
    stream,
)

DATA = os.path.join(os.path.dirname(__file__), "data")


def _roundtrip(skeleton, motion, ref_frame=0):
    pose, _ = forward_kinematics(skeleton, motion)
    ref = reference_from_motion(skeleton, motion, ref_frame)
    rec = analytic_ik_reference(skeleton, pose, ref)
    pose2, _ = forward_kinematics(skeleton, rec)
    return pose, rec, pose2


def test_01_fk_ik_roundtrip():
    start = time.perf_counter()
    worst = 0.0
    sizes = []
    for seed in range(100):
        cfg = GenConfig(seed=seed, joints=(5, 150), frames=48)
        skel = gen_skeleton(cfg)
        sizes.append(skel.joint_count)
        pose, _, pose2 = _roundtrip(skel, gen_motion(skel, cfg))
        worst = max(worst, float(np.linalg.norm(pose.positions - pose2.positions, axis=-1).mean()))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 30.0
    record(1, "FK/IK round trip", ok, f"max MPJPE {worst:.2e} units, {elapsed:.1f}s, joints {min(sizes)}-{max(sizes)}")
    assert worst < 1e-6
    assert elapsed < 30.0


def _hold_leaves(skel, motion, frame=0):
    mats = decode_motion(motion).copy()
    leaves = [j for j in range(skel.joint_count) if not skel.children[j]]
    mats[:, leaves] = mats[frame, leaves][None]
    return RotationClip.from_matrices(mats, motion.root_translation)


def test_02_rotation_recovery_on_branching_trees():
    worst_internal, worst_all = 0.0, 0.0
    for seed in range(30):
        cfg = GenConfig(seed=seed, joints=(5, 60), frames=48)
        skel = gen_branching_skeleton(cfg)
        internal = [j for j in range(skel.joint_count) if skel.children[j]]
        assert all(len(skel.children[j]) >= 2 for j in internal)
        motion = gen_motion(skel, cfg)
        _, rec, _ = _roundtrip(skel, motion)
        err = geodesic_angle(decode_motion(rec), decode_motion(motion))
        worst_internal = max(worst_internal, float(err[:, internal].mean()))
        # leaves carry no positional signal; held at the reference they are recoverable too
        held = _hold_leaves(skel, motion)
        _, rec2, _ = _roundtrip(skel, held)
        worst_all = max(worst_all, float(geodesic_angle(decode_motion(rec2), decode_motion(held)).mean()))
    ok = worst_internal < 1e-6 and worst_all < 1e-6
    record(2, "rotation recovery exactness", ok, f"internal {worst_internal:.2e} rad, all joints {worst_all:.2e} rad")
    assert worst_internal < 1e-6
    assert worst_all < 1e-6


def test_03_twist_ambiguity_is_exactly_the_injected_angle():
    cfg = GenConfig(seed=7, joints=(12, 12), frames=48, branching_bias=0.2)
    skel = gen_skeleton(cfg)
    motion = gen_motion(skel, cfg)
    pose, rec, _ = _roundtrip(skel, motion)
    ref = reference_from_motion(skel, motion, 0)
    base = decode_motion(rec)
    singles = [j for j in range(skel.joint_count) if len(skel.children[j]) == 1 and skel.parents[j] != ROOT]
    assert singles
    worst_pos, worst_ang = 0.0, 0.0
    for j in singles:
        child = skel.children[j][0]
        axis = skel.offsets[child] / np.linalg.norm(skel.offsets[child])
        for deg in (10.0, 45.0, 120.0):
            tw = axis_rotation(axis, math.radians(deg))
            mats = base.copy()
            mats[:, j] = mats[:, j] @ tw
            mats[:, child] = tw.T @ mats[:, child]
            twisted = RotationClip.from_matrices(mats, rec.root_translation)
            tpose, _ = forward_kinematics(skel, twisted)
            worst_pos = max(worst_pos, float(np.abs(tpose.positions - pose.positions).max()))
            rec2 = analytic_ik_reference(skel, tpose, ref)
            ang = geodesic_angle(decode_motion(rec2)[:, j], mats[:, j])
            worst_ang = max(worst_ang, float(np.abs(ang - math.radians(deg)).max()))
    ok = worst_pos < 1e-6 and worst_ang < 1e-6
    record(3, "twist ambiguity quantified", ok, f"position delta {worst_pos:.2e}, |angle - theta| {worst_ang:.2e} rad")
    assert worst_pos < 1e-6
    assert worst_ang < 1e-6


def test_04_rerig_preserves_positions_but_not_rotations():
    worst_pos, min_change = 0.0, np.inf
    for seed in range(50):
        cfg = GenConfig(seed=seed, joints=(5, 40))
        skel = gen_skeleton(cfg)
        motion = gen_motion(skel, cfg)
        skel2, motion2 = rerig_axis_convention(skel, motion, gen_axis_convention(skel, seed))
        p1, _ = forward_kinematics(skel, motion)
        p2, _ = forward_kinematics(skel2, motion2)
        worst_pos = max(worst_pos, float(np.abs(p1.positions - p2.positions).max()))
        change = math.degrees(float(geodesic_angle(decode_motion(motion), decode_motion(motion2)).mean()))
        min_change = min(min_change, change)
    ok = worst_pos < 1e-9 and min_change > 10.0
    record(4, "ill-posedness demonstrator", ok, f"position delta {worst_pos:.2e}, min mean rotation change {min_change:.1f} deg")
    assert worst_pos < 1e-9
    assert min_change > 10.0


def test_05_rot6d_roundtrip_and_gram_schmidt_invariances():
    rng = stream(5, "acceptance-6d")
    R = random_rotations(rng, 10_000)
    back = rot6d_to_matrix(matrix_to_rot6d(R))
    rt = float(geodesic_angle(R, back).max())
    r6 = rng.standard_normal((10_000, 6))
    M = rot6d_to_matrix(r6)
    scaled = r6.copy()
    scaled[:, :3] *= rng.uniform(0.1, 10.0, size=(10_000, 1))
    sheared = r6.copy()
    sheared[:, 3:] += rng.uniform(-5.0, 5.0, size=(10_000, 1)) * r6[:, :3]
    inv_scale = float(np.abs(rot6d_to_matrix(scaled) - M).max())
    inv_shear = float(np.abs(rot6d_to_matrix(sheared) - M).max())
    ok = rt < 1e-9 and inv_scale < 1e-9 and inv_shear < 1e-9
    record(5, "6D representation", ok, f"round trip {rt:.2e} rad, scale {inv_scale:.2e}, shear {inv_shear:.2e}")
    assert rt < 1e-9
    assert inv_scale < 1e-9 and inv_shear < 1e-9


def test_06_gradient_verification():
    results = {k: run_gradcheck(k, seeds=50) for k in ("gmha", "film", "rope", "cross")}
    ok = all(r.max_error < 1e-4 for r in results.values())
    detail = ", ".join(f"{k} {r.max_error:.1e}" for k, r in results.items())
    record(6, "gradient verification (50 seeds each)", ok, detail)
    for r in results.values():
        assert r.max_error < 1e-4, r.kernel


def _random_tree(rng, J):
    parents = [ROOT]
    for i in range(1, J):
        parents.append(int(rng.integers(0, i)))
    perm = rng.permutation(J)
    inv = np.argsort(perm)
    # relabel so parents may have larger indices than children
    new_parents = [ROOT] * J
    for old, p in enumerate(parents):
        new_parents[inv[old]] = ROOT if p == ROOT else int(inv[p])
    return Skeleton(new_parents, rng.standard_normal((J, 3)))


def test_07_mask_correctness():
    rng = stream(7, "acceptance-masks")
    bad = []
    for k in range(200):
        J = int(rng.integers(1, 40))
        skel = _random_tree(rng, J)
        rel = build_graph_relations(skel)
        jm = rng.random(J) > 0.2
        jm[skel.root] = True
        if not np.array_equal(rel.dist, oracles.all_pairs_bfs(skel.parents)):
            bad.append((k, "dist"))
        local = build_gl_mask(rel, 0, jm)
        glob_ = build_gl_mask(rel, 1, jm)
        if not np.array_equal(local.allowed, oracles.ancestor_local_mask(skel.parents, jm)):
            bad.append((k, "local"))
        if not np.array_equal(glob_.allowed, jm[:, None] & jm[None, :]):
            bad.append((k, "global"))
        if np.any(local.allowed & ~glob_.allowed):
            bad.append((k, "subset"))
    record(7, "mask correctness (200 trees)", not bad, f"{len(bad)} mismatches")
    assert not bad


def test_08_schedule_and_loss_plumbing():
    p0, p15, p30, p99 = (mixed_pose_probability(e) for e in (0, 15, 30, 99))
    sched_ok = abs(p0 - 0.1) < 1e-12 and abs(p15 - 0.55) < 1e-12 and p30 == 1.0 and p99 == 1.0
    rng = stream(8, "acceptance-loss")
    worst = 0.0
    for _ in range(1000):
        vals = rng.uniform(0.0, 10.0, size=4)
        comps = LossComponents(*vals)
        expect = vals[0] + vals[1] + vals[2] + 0.1 * vals[3]
        worst = max(worst, abs(combine_losses(comps, LossWeights()) - expect))
    ok = sched_ok and worst < 1e-12
    record(8, "schedule and loss plumbing", ok, f"p(0,15,30)=({p0:g},{p15:g},{p30:g}), loss diff {worst:.1e}")
    assert sched_ok
    assert worst < 1e-12


def test_09_metrics_match_loop_oracles(tmp_path):
    rng = stream(9, "acceptance-metrics")
    worst = 0.0
    for _ in range(20):
        T, J = int(rng.integers(2, 9)), int(rng.integers(1, 8))
        mask = rng.random(J) > 0.3
        mask[0] = True
        gp, pp = rng.standard_normal((T, J, 3)), rng.standard_normal((T, J, 3))
        gr, pr = random_rotations(rng, (T, J)), random_rotations(rng, (T, J))
        g_pose, p_pose = PoseClip(gp, mask), PoseClip(pp, mask)
        g_rot, p_rot = RotationClip.from_matrices(gr, joint_mask=mask), RotationClip.from_matrices(pr, joint_mask=mask)
        gr, pr = decode_motion(g_rot), decode_motion(p_rot)
        pairs = [
            (mpjpe(p_pose, g_pose), oracles.mpjpe_loop(pp, gp, mask)),
            (mpjve(p_pose, g_pose), oracles.mpjve_loop(pp, gp, mask)),
            (angle_error(p_rot, g_rot), oracles.angle_error_loop(pr, gr, mask)),
            (angular_velocity_error(p_rot, g_rot), oracles.angular_velocity_error_loop(pr, gr, mask)),
        ]
        worst = max(worst, max(abs(a - b) for a, b in pairs))

    # 0.02 normalized units along one axis is 1 cm after the x50 rescale
    skel = Skeleton([ROOT, 0, 1], np.zeros((3, 3)))
    gt = np.zeros((4, 3, 3))
    gt[:, 1, 1] = 1.0
    gt[:, 2, 1] = 2.0
    pred = gt.copy()
    pred[..., 0] += 0.02
    fixture = mpjpe(PoseClip(pred), PoseClip(gt))
    from rigkit.clipio import ClipFile, save_clip

    save_clip(tmp_path / "p.json", ClipFile(skel, None, PoseClip(pred)))
    save_clip(tmp_path / "g.json", ClipFile(skel, None, PoseClip(gt)))
    res = cli.run(["metrics", "--pred", str(tmp_path / "p.json"), "--gt", str(tmp_path / "g.json")])
    line = [ln for ln in res.report.splitlines() if ln.startswith("mpjpe_cm:")]
    ok = worst < 1e-9 and fixture == 1.0 and line == ["mpjpe_cm: 1.0"]
    record(9, "metrics oracle equivalence", ok, f"max diff {worst:.1e}, fixture {fixture!r} cm")
    assert worst < 1e-9
    assert fixture == 1.0
    assert line == ["mpjpe_cm: 1.0"]


MALFORMED = {
    "empty": "",
    "no_hierarchy": "ROOT a\n{\nOFFSET 0 0 0\n}\n",
    "root_without_name": "HIERARCHY\nROOT\n{\n",
    "bad_offset_number": "HIERARCHY\nROOT a\n{\nOFFSET 0 x 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0\n",
    "short_offset": "HIERARCHY\nROOT a\n{\nOFFSET 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0\n",
    "unknown_channel": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Wrotation Zrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0\n",
    "bad_channel_count": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 7 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0\n",
    "unterminated_block": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n",
    "missing_motion": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\n",
    "bad_frame_count": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: two\nFrame Time: 0.1\n0 0 0\n",
    "negative_frame_count": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: -1\nFrame Time: 0.1\n",
    "missing_frame_time": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 1\n0 0 0\n",
    "short_row": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 2\nFrame Time: 0.1\n0 0 0\n0 0\n",
    "long_row": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0 0\n",
    "non_numeric_value": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 1\nFrame Time: 0.1\n0 nan? 0\n",
    "missing_rows": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\nFrames: 3\nFrame Time: 0.1\n0 0 0\n",
    "joint_outside_root": "HIERARCHY\nJOINT a\n{\n}\n",
    "stray_brace": "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\n}\n}\nMOTION\nFrames: 0\nFrame Time: 0.1\n",
}


def _positioned(exc):
    return getattr(exc, "line", None) is not None


def test_10_bvh_corpus():
    files = sorted(glob.glob(os.path.join(DATA, "*.bvh")))
    assert len(files) >= 3
    struct_ok = all(documents_equal(read_bvh(f), parse_bvh(write_bvh(read_bvh(f)))) for f in files)

    worst = 0.0
    for seed in range(20):
        cfg = GenConfig(seed=seed, joints=(5, 30), frames=24)
        skel = gen_skeleton(cfg)
        motion = gen_motion(skel, cfg)
        for order in ("ZXY", "XYZ", "YZX"):
            doc, locked = model_to_bvh(skel, motion, order, return_flags=True)
            s2, m2 = bvh_to_model(parse_bvh(write_bvh(doc)))
            # export is depth-first; match joints by name
            idx = [s2.names.index(n) for n in skel.names]
            err = geodesic_angle(decode_motion(m2)[:, idx], decode_motion(motion))
            err = err[~locked] if locked.shape == err.shape else err
            worst = max(worst, float(err.max()))

    failures = []
    for name, text in MALFORMED.items():
        try:
            parse_bvh(text)
            failures.append(f"{name}: accepted")
        except BvhError as exc:
            if not _positioned(exc):
                failures.append(f"{name}: no position")
        except Exception as exc:  # any other exception type is a crash
            failures.append(f"{name}: crashed with {type(exc).__name__}")
    ok = struct_ok and worst < 1e-6 and not failures and len(MALFORMED) >= 10
    record(10, "BVH corpus", ok, f"{len(files)} golden files, rotation err {worst:.1e} rad, {len(MALFORMED)} malformed cases, {len(failures)} failures")
    assert struct_ok
    assert worst < 1e-6
    assert not failures, failures


def _cli_commands(tmp):
    gen = os.path.join(tmp, "gen.json")
    return [
        ["generate", "--seed", "3", "--joints", "6,12", "--frames", "10", "--output", gen],
        ["validate", "--input", gen],
        ["fk", "--input", gen, "--output", os.path.join(tmp, "fk.json"), "--detect-static"],
        ["ik", "--input", gen, "--reference", gen, "--output", os.path.join(tmp, "ik.json")],
        ["metrics", "--pred", os.path.join(tmp, "ik.json"), "--gt", gen],
        ["masks", "--input", gen, "--layers", "3", "--output", os.path.join(tmp, "masks.txt")],
        ["demo-ambiguity", "--seed", "4", "--joints", "6,10", "--frames", "8"],
        ["gradcheck", "--kernel", "gmha", "--seeds", "6"],
        ["gradcheck", "--kernel", "cross", "--seeds", "6"],
        ["schedule", "--epochs", "35"],
        ["convert", "--input", gen, "--output", os.path.join(tmp, "out.bvh")],
        ["convert", "--input", os.path.join(tmp, "out.bvh"), "--output", os.path.join(tmp, "back.json")],
    ]


def _run_all(tmp):
    out = []
    for argv in _cli_commands(tmp):
        res = cli.run(argv)
        files = [open(p, "rb").read() for p in res.outputs]
        out.append((res.exit_code, res.report, files))
    return out


def test_11_cli_determinism(tmp_path, monkeypatch):
    runs = []
    for i, threads in enumerate(("1", "4", "1")):
        monkeypatch.setenv("RIGKIT_THREADS", threads)
        d = tmp_path / f"run{i}"
        d.mkdir()
        monkeypatch.chdir(d)
        runs.append(_run_all("."))
    codes_ok = all(code == 0 for code, _, _ in runs[0])
    same = runs[0] == runs[1] == runs[2]
    record(11, "CLI determinism", codes_ok and same, f"{len(runs[0])} commands x 3 runs (threads 1/4/1)")
    assert codes_ok, [r[1] for r in runs[0] if r[0] != 0]
    assert same
