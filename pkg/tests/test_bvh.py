import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rigkit.bvh import (
    axis_remap_matrix,
    bvh_to_model,
    documents_equal,
    invert_axis_remap,
    matrices_to_euler,
    model_to_bvh,
    parse_bvh,
    read_bvh,
    remap_axes,
    write_bvh,
)
from rigkit.errors import BvhArityError, BvhSyntaxError, UnsupportedChannelsError
from rigkit.kinematics import decode_motion, forward_kinematics
from rigkit.rotations import geodesic_angle, rot_x, rot_y, rot_z
from rigkit.synthetic import GenConfig, gen_motion, gen_skeleton
from strategies import seeds

DATA = os.path.join(os.path.dirname(__file__), "data")
HEADER = "HIERARCHY\nROOT a\n{\n\tOFFSET 0 0 0\n\tCHANNELS 3 Xrotation Yrotation Zrotation\n}\nMOTION\n"


def test_chain_file_structure_and_fk():
    doc = read_bvh(os.path.join(DATA, "chain_zxy.bvh"))
    assert [j.name for j in doc.joints] == ["Hips", "Spine", "Neck"]
    assert doc.frame_count == 3 and doc.channel_count == 12
    assert doc.frame_time == pytest.approx(0.0333333)
    skel, clip = bvh_to_model(doc)
    assert skel.names[-1] == "Neck_end" and skel.parents[-1] == 2
    pose, _ = forward_kinematics(skel, clip)
    # explicit per-joint matrices for frame 1, intrinsic Z then X then Y
    row = doc.motion[1]
    mats = np.stack(
        [
            rot_z(math.radians(row[3])) @ rot_x(math.radians(row[4])) @ rot_y(math.radians(row[5])),
            rot_z(math.radians(row[6])) @ rot_x(math.radians(row[7])) @ rot_y(math.radians(row[8])),
            rot_z(math.radians(row[9])) @ rot_x(math.radians(row[10])) @ rot_y(math.radians(row[11])),
            np.eye(3),
        ]
    )[None]
    expect = oracles.fk_homogeneous(skel.parents, skel.offsets, mats, row[None, :3])
    np.testing.assert_allclose(pose.positions[1], expect[0], atol=1e-12)


def test_root_offset_is_added_to_translation():
    skel, clip = bvh_to_model(read_bvh(os.path.join(DATA, "branch_xyz.bvh")))
    np.testing.assert_allclose(clip.root_translation[0], [1.0, 2.0, 3.0])
    np.testing.assert_allclose(clip.root_translation[1], [1.5, 2.1, 2.8])
    assert skel.joint_count == 8


@pytest.mark.parametrize("name", sorted(f for f in os.listdir(DATA) if f.endswith(".bvh")))
def test_writer_is_canonical_and_stable(name):
    doc = read_bvh(os.path.join(DATA, name))
    text = write_bvh(doc)
    assert text == write_bvh(parse_bvh(text))
    assert documents_equal(doc, parse_bvh(text))
    assert "\t" in text and "-0.000000" not in text


def test_euler_composition_order():
    R = rot_y(0.3) @ rot_x(-0.2) @ rot_z(1.1)
    ang, locked = matrices_to_euler(R, "YXZ")
    np.testing.assert_allclose(np.radians(ang), [0.3, -0.2, 1.1], atol=1e-12)
    assert not locked


def test_gimbal_lock_is_flagged():
    R = rot_z(0.4) @ rot_x(math.pi / 2) @ rot_y(0.1)
    ang, locked = matrices_to_euler(R, "ZXY")
    assert locked
    assert ang[2] == 0.0
    back = rot_z(math.radians(ang[0])) @ rot_x(math.radians(ang[1])) @ rot_y(0.0)
    np.testing.assert_allclose(back, R, atol=1e-6)


@settings(max_examples=25)
@given(seeds, st.sampled_from(["XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"]))
def test_model_roundtrip_property(seed, order):
    cfg = GenConfig(seed=seed, joints=(2, 12), frames=4)
    skel = gen_skeleton(cfg)
    motion = gen_motion(skel, cfg)
    doc, locked = model_to_bvh(skel, motion, order, return_flags=True)
    s2, m2 = bvh_to_model(parse_bvh(write_bvh(doc)))
    idx = [s2.names.index(n) for n in skel.names]
    err = geodesic_angle(decode_motion(m2)[:, idx], decode_motion(motion))
    assert err[~locked].max(initial=0.0) < 1e-6
    p1, _ = forward_kinematics(skel, motion)
    p2, _ = forward_kinematics(s2, m2)
    assert np.abs(p2.positions[:, idx] - p1.positions).max() < 1e-5


def test_end_sites_survive_model_roundtrip():
    doc = read_bvh(os.path.join(DATA, "branch_xyz.bvh"))
    skel, clip = bvh_to_model(doc)
    doc2 = model_to_bvh(skel, clip, "XYZ", frame_time=doc.frame_time)
    assert documents_equal(doc, doc2, atol=1e-9)


@pytest.mark.parametrize(
    "tail, line, col",
    [
        ("Frames: x\nFrame Time: 0.1\n", 8, 9),
        ("Frames: 1\nFrame Time: 0.1\n1 2 q\n", 10, 5),
    ],
)
def test_syntax_errors_carry_line_and_column(tail, line, col):
    with pytest.raises(BvhSyntaxError) as info:
        parse_bvh(HEADER + tail)
    assert (info.value.line, info.value.column) == (line, col)
    assert info.value.expected


def test_arity_error_cites_row():
    with pytest.raises(BvhArityError) as info:
        parse_bvh(HEADER + "Frames: 3\nFrame Time: 0.1\n0 0 0\n0 0 0\n0 0\n")
    assert info.value.row == 2 and info.value.line == 12


def test_unknown_token_position():
    with pytest.raises(BvhSyntaxError) as info:
        parse_bvh("HIERARCHY\nROOT a\n{\n\tOFFSET 0 0 0\n\tCHANNELS 3 Xrotation Wrotation Zrotation\n}\n")
    assert (info.value.line, info.value.column) == (5, 23)


def test_non_root_position_channels_unsupported():
    text = (
        "HIERARCHY\nROOT a\n{\nOFFSET 0 0 0\nCHANNELS 3 Xrotation Yrotation Zrotation\n"
        "JOINT b\n{\nOFFSET 1 0 0\nCHANNELS 3 Xposition Yposition Zposition\n}\n}\n"
        "MOTION\nFrames: 1\nFrame Time: 0.1\n0 0 0 0 0 0\n"
    )
    with pytest.raises(UnsupportedChannelsError):
        bvh_to_model(parse_bvh(text))


def test_axis_remap_matrix_and_inverse():
    A = axis_remap_matrix("x,z,-y")
    np.testing.assert_array_equal(A @ [1, 2, 3], [1, 3, -2])
    inv = axis_remap_matrix(invert_axis_remap("x,z,-y"))
    np.testing.assert_array_equal(inv @ A, np.eye(3))
    for bad in ("x,y", "x,x,z", "x,y,w"):
        with pytest.raises(ValueError):
            axis_remap_matrix(bad)


@given(seeds, st.sampled_from(["x,z,-y", "-z,y,x", "y,x,z"]), st.floats(0.01, 100.0))
def test_remap_transforms_fk_positions(seed, spec, scale):
    cfg = GenConfig(seed=seed, joints=(2, 8), frames=3)
    skel = gen_skeleton(cfg)
    motion = gen_motion(skel, cfg)
    s2, m2 = remap_axes(skel, motion, spec, scale)
    p1, _ = forward_kinematics(skel, motion)
    p2, _ = forward_kinematics(s2, m2)
    A = axis_remap_matrix(spec)
    np.testing.assert_allclose(p2.positions, scale * p1.positions @ A.T, atol=1e-9 * max(scale, 1.0))
