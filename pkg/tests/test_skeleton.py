import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from rigkit.errors import ShapeError, SkeletonError
from rigkit.kinematics import forward_kinematics
from rigkit.skeleton import (
    ROOT,
    PoseClip,
    RotationClip,
    Skeleton,
    detect_static_joints,
    normalize_clip,
    require_valid,
    rescale_for_eval,
    validate_skeleton,
)
from rigkit.synthetic import GenConfig, gen_motion, gen_skeleton
from strategies import parent_lists


def _skel(parents):
    return Skeleton(parents, np.ones((len(parents), 3)))


@given(parent_lists(1, 40))
def test_generated_trees_validate(parents):
    assert validate_skeleton(_skel(parents)).ok
    assert oracles.tree_check(parents)


@given(st.lists(st.integers(-1, 12), min_size=1, max_size=12))
def test_validator_agrees_with_union_find(parents):
    assert validate_skeleton(_skel(parents)).ok == oracles.tree_check(parents)


@pytest.mark.parametrize(
    "parents, rule",
    [
        ([], "empty"),
        ([0], "cycle"),
        ([ROOT, ROOT], "two roots"),
        ([ROOT, 5], "parent out of range"),
        ([ROOT, 2, 1], "cycle"),
        ([1, 2, 0], "no root"),
    ],
)
def test_validator_rules(parents, rule):
    rules = {v.rule for v in validate_skeleton(_skel(parents)).violations}
    assert rule in rules


def test_joint_cap_and_offsets_and_names():
    skel = Skeleton([ROOT] + list(range(150)), np.zeros((151, 3)))
    assert "joint cap" in {v.rule for v in validate_skeleton(skel).violations}
    bad = Skeleton([ROOT, 0], np.array([[0, 0, 0], [np.nan, 0, 0]]))
    assert "non-finite offset" in {v.rule for v in validate_skeleton(bad).violations}
    unnamed = Skeleton([ROOT, 0], np.zeros((2, 3)), names=["a", ""])
    assert "empty name" in {v.rule for v in validate_skeleton(unnamed).violations}
    with pytest.raises(SkeletonError):
        require_valid(Skeleton([ROOT, ROOT], np.zeros((2, 3))))


def test_children_and_topological_order():
    skel = _skel([2, 2, ROOT, 0])
    assert skel.root == 2
    assert skel.children[2] == (0, 1) or list(skel.children[2]) == [0, 1]
    order = list(skel.topological_order)
    for j in range(4):
        if skel.parents[j] != ROOT:
            assert order.index(skel.parents[j]) < order.index(j)


def test_arrays_are_read_only():
    skel = _skel([ROOT, 0])
    with pytest.raises(ValueError):
        skel.offsets[0, 0] = 1.0


def test_clip_shape_checks():
    with pytest.raises(ShapeError):
        PoseClip(np.zeros((3, 2, 2)))
    with pytest.raises(ShapeError):
        RotationClip(np.zeros((3, 2, 6)), np.zeros((4, 3)))


def test_static_detection_matches_loop_oracle():
    cfg = GenConfig(seed=3, joints=(8, 8), frames=12)
    skel = gen_skeleton(cfg)
    m = gen_motion(skel, cfg).matrices().copy()
    m[:, 2] = m[0, 2]  # joint 2 rotation-static
    m[:, 3] = m[0, 3]
    motion = RotationClip.from_matrices(m, np.zeros((12, 3)))
    pose, _ = forward_kinematics(skel, motion)
    ps, rs = detect_static_joints(skel, pose, motion)
    ops, ors = oracles.static_flags_loop(pose.positions, m, skel.root, 1e-4, 0.1)
    np.testing.assert_array_equal(ps, ops)
    np.testing.assert_array_equal(rs, ors)
    assert rs[2] and rs[3]
    assert ps[skel.root]


def test_normalize_and_rescale():
    rng = np.random.default_rng(0)
    pose = PoseClip(rng.uniform(-3, 7, size=(5, 4, 3)))
    norm, tf = normalize_clip(pose)
    assert np.abs(norm.positions).max() == pytest.approx(1.0)
    np.testing.assert_allclose(tf.invert(norm.positions), pose.positions, atol=1e-12)
    flat, tf2 = normalize_clip(PoseClip(np.ones((2, 2, 3))))
    assert tf2.scale == 1.0 and np.all(flat.positions == 0)
    np.testing.assert_allclose(rescale_for_eval(norm).positions, 50 * norm.positions)


def test_twisting_bone_is_position_static_not_rotation_static():
    from rigkit.rotations import axis_rotation

    # root -> 1 -> 2 along +y; joint 1 spins about its own bone axis
    skel = Skeleton([ROOT, 0, 1], [[0, 0, 0], [0, 1.0, 0], [0, 1.0, 0]])
    T = 6
    mats = np.tile(np.eye(3), (T, 3, 1, 1))
    for t in range(T):
        mats[t, 1] = axis_rotation([0, 1.0, 0], 0.3 * t)
    motion = RotationClip.from_matrices(mats, np.zeros((T, 3)))
    pose, _ = forward_kinematics(skel, motion)
    ps, rs = detect_static_joints(skel, pose, motion)
    assert ps[2] and ps[1]
    assert not rs[1] and rs[2]
