"""Deterministic generators for skeletons, motions, axis conventions and
reference frames.

Every draw comes from a Philox stream keyed by ``(seed, tag)``, so adding a
new kind of draw never shifts the numbers an existing generator produces.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .kinematics import AxisConvention, forward_kinematics
from .rotations import axis_angle_to_matrix, random_rotations
from .skeleton import DEFAULT_JOINT_CAP, ROOT, ReferenceFrame, RotationClip, Skeleton

DEFAULT_FRAMES = 48


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    joints: tuple = (5, 30)
    frames: int = DEFAULT_FRAMES
    smoothness: float = 0.8
    branching_bias: float = 0.3
    rotation_noise: float = 0.5
    translation_noise: float = 0.05
    joint_cap: int = DEFAULT_JOINT_CAP

    def __post_init__(self):
        lo, hi = self.joints if np.ndim(self.joints) else (self.joints, self.joints)
        object.__setattr__(self, "joints", (int(lo), int(hi)))
        if not 1 <= lo <= hi <= self.joint_cap:
            raise ValueError(f"joint range {self.joints} must lie in [1, {self.joint_cap}]")
        if not 0.0 < self.smoothness <= 1.0:
            raise ValueError("smoothness must be in (0, 1]")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")


def stream(seed, tag):
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(zlib.crc32(tag.encode()),))
    return np.random.Generator(np.random.Philox(ss))


def _random_offsets(rng, n):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(0.5, 1.0, size=(n, 1))


def gen_skeleton(config):
    """Random tree: each new joint extends the latest joint, or with
    probability ``branching_bias`` attaches to a uniformly chosen earlier one."""
    rng = stream(config.seed, "skeleton")
    lo, hi = config.joints
    J = int(rng.integers(lo, hi + 1))
    parents = [ROOT]
    for i in range(1, J):
        if rng.random() < config.branching_bias:
            parents.append(int(rng.integers(0, i)))
        else:
            parents.append(i - 1)
    offsets = _random_offsets(rng, J)
    offsets[0] = 0.0
    return Skeleton(parents, offsets, joint_cap=config.joint_cap)


def gen_branching_skeleton(config):
    """Random tree in which every internal joint has two or three children
    with non-collinear bone directions. Joint count lands within two of the
    drawn target."""
    rng = stream(config.seed, "branching-skeleton")
    lo, hi = config.joints
    target = max(int(rng.integers(lo, hi + 1)), 3)
    parents = [ROOT]
    frontier = [0]
    while len(parents) < target and frontier:
        j = frontier.pop(0)
        k = int(rng.integers(2, 4))
        k = min(k, max(2, target - len(parents)), config.joint_cap - len(parents))
        if k < 2:
            break
        for _ in range(k):
            parents.append(j)
            frontier.append(len(parents) - 1)
    offsets = _random_offsets(rng, len(parents))
    offsets[0] = 0.0
    return Skeleton(parents, offsets, joint_cap=config.joint_cap)


def gen_motion(skeleton, config):
    """Smooth random motion: per-joint rotation vectors follow a random walk
    whose velocity is low-pass filtered with strength ``smoothness``."""
    rng = stream(config.seed, "motion")
    T, J = config.frames, skeleton.joint_count
    s = config.smoothness
    base = rng.standard_normal((J, 3))
    base *= rng.uniform(0.0, 0.5 * np.pi, size=(J, 1)) / np.linalg.norm(base, axis=1, keepdims=True)
    noise = rng.standard_normal((T, J, 3)) * config.rotation_noise
    tnoise = rng.standard_normal((T, 3)) * config.translation_noise

    rotvec = np.empty((T, J, 3))
    trans = np.empty((T, 3))
    vel = np.zeros((J, 3))
    tvel = np.zeros(3)
    rotvec[0] = base
    trans[0] = 0.0
    for t in range(1, T):
        vel = s * vel + (1.0 - s) * noise[t]
        tvel = s * tvel + (1.0 - s) * tnoise[t]
        rotvec[t] = rotvec[t - 1] + vel
        trans[t] = trans[t - 1] + tvel
    return RotationClip.from_matrices(axis_angle_to_matrix(rotvec), trans)


def gen_axis_convention(skeleton, seed):
    rng = stream(seed, "axis-convention")
    return AxisConvention(random_rotations(rng, skeleton.joint_count))


def reference_from_motion(skeleton, motion, frame=0):
    pose, _ = forward_kinematics(skeleton, motion)
    return ReferenceFrame.from_clip(pose, motion, frame)
