"""Skeleton and motion data model, validation, static-joint detection and
normalization."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import ShapeError, SkeletonError
from .rotations import geodesic_angle, rot6d_to_matrix

ROOT = -1
DEFAULT_JOINT_CAP = 150
CM_PER_UNIT = 50.0  # [-1, 1] spans 2 units -> 100 cm
EPS_POS = 1e-4
EPS_ROT_DEG = 0.1


def _frozen_array(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Tree-structured rig: parent indices (``ROOT`` = -1), rest offsets of
    each joint in its parent's frame, names and static flags.

    Construction does not validate; see :func:`validate_skeleton`.
    """

    parents: tuple
    offsets: np.ndarray
    names: tuple = None
    position_static: np.ndarray = None
    rotation_static: np.ndarray = None
    joint_cap: int = DEFAULT_JOINT_CAP

    def __post_init__(self):
        n = len(self.parents)
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "offsets", _frozen_array(np.reshape(self.offsets, (-1, 3)) if n else np.zeros((0, 3))))
        names = self.names if self.names is not None else [f"joint_{i}" for i in range(n)]
        object.__setattr__(self, "names", tuple(str(s) for s in names))
        for attr in ("position_static", "rotation_static"):
            val = getattr(self, attr)
            val = np.zeros(n, dtype=bool) if val is None else val
            object.__setattr__(self, attr, _frozen_array(val, dtype=bool))

    @property
    def joint_count(self):
        return len(self.parents)

    @cached_property
    def root(self):
        roots = [i for i, p in enumerate(self.parents) if p == ROOT]
        if len(roots) != 1:
            raise SkeletonError(f"skeleton must have exactly one root, found {len(roots)}")
        return roots[0]

    @cached_property
    def children(self):
        kids = [[] for _ in self.parents]
        for j, p in enumerate(self.parents):
            if 0 <= p < len(self.parents):
                kids[p].append(j)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def topological_order(self):
        """Joints ordered so every joint follows its parent (BFS from the root)."""
        order = []
        queue = deque([self.root])
        while queue:
            j = queue.popleft()
            order.append(j)
            queue.extend(self.children[j])
        if len(order) != self.joint_count:
            raise SkeletonError("parent graph is not a tree rooted at the root joint")
        return tuple(order)

    def with_static_flags(self, position_static, rotation_static):
        return replace(self, position_static=position_static, rotation_static=rotation_static)


@dataclass(frozen=True, eq=False)
class PoseClip:
    """Joint positions, ``(T, J, 3)``, in the canonical frame."""

    positions: np.ndarray
    joint_mask: np.ndarray = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[-1] != 3:
            raise ShapeError(f"positions must be (T, J, 3), got {pos.shape}")
        object.__setattr__(self, "positions", _frozen_array(pos))
        mask = np.ones(pos.shape[1], dtype=bool) if self.joint_mask is None else self.joint_mask
        mask = _frozen_array(mask, dtype=bool)
        if mask.shape != (pos.shape[1],):
            raise ShapeError(f"joint_mask must have shape ({pos.shape[1]},), got {mask.shape}")
        object.__setattr__(self, "joint_mask", mask)

    @property
    def frames(self):
        return self.positions.shape[0]

    @property
    def joint_count(self):
        return self.positions.shape[1]


@dataclass(frozen=True, eq=False)
class RotationClip:
    """Local joint rotations in 6D, ``(T, J, 6)``, plus root translation ``(T, 3)``."""

    rot6d: np.ndarray
    root_translation: np.ndarray = None
    joint_mask: np.ndarray = None

    def __post_init__(self):
        r = np.asarray(self.rot6d, dtype=np.float64)
        if r.ndim != 3 or r.shape[-1] != 6:
            raise ShapeError(f"rot6d must be (T, J, 6), got {r.shape}")
        object.__setattr__(self, "rot6d", _frozen_array(r))
        tr = np.zeros((r.shape[0], 3)) if self.root_translation is None else self.root_translation
        tr = _frozen_array(tr)
        if tr.shape != (r.shape[0], 3):
            raise ShapeError(f"root_translation must be ({r.shape[0]}, 3), got {tr.shape}")
        object.__setattr__(self, "root_translation", tr)
        mask = np.ones(r.shape[1], dtype=bool) if self.joint_mask is None else self.joint_mask
        mask = _frozen_array(mask, dtype=bool)
        if mask.shape != (r.shape[1],):
            raise ShapeError(f"joint_mask must have shape ({r.shape[1]},), got {mask.shape}")
        object.__setattr__(self, "joint_mask", mask)

    @property
    def frames(self):
        return self.rot6d.shape[0]

    @property
    def joint_count(self):
        return self.rot6d.shape[1]

    def matrices(self):
        return rot6d_to_matrix(self.rot6d)

    @classmethod
    def from_matrices(cls, matrices, root_translation=None, joint_mask=None):
        m = np.asarray(matrices, dtype=np.float64)
        r6 = np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)
        return cls(r6, root_translation, joint_mask)


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    """One known pose/rotation pair that anchors the local axes."""

    ref_positions: np.ndarray
    ref_rot6d: np.ndarray
    ref_root_translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ref_positions", _frozen_array(np.reshape(self.ref_positions, (-1, 3))))
        object.__setattr__(self, "ref_rot6d", _frozen_array(np.reshape(self.ref_rot6d, (-1, 6))))
        object.__setattr__(self, "ref_root_translation", _frozen_array(np.reshape(self.ref_root_translation, (3,))))

    @classmethod
    def from_clip(cls, pose, motion, frame=0):
        return cls(pose.positions[frame], motion.rot6d[frame], motion.root_translation[frame])


@dataclass(frozen=True)
class Violation:
    rule: str
    joint: int | None
    message: str

    def __str__(self):
        where = "" if self.joint is None else f"joint {self.joint}: "
        return f"{where}{self.rule}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        return "ok" if self.ok else "\n".join(str(v) for v in self.violations)


def validate_skeleton(skeleton, cap=None):
    """Check the tree invariants; violations are returned, not raised."""
    cap = skeleton.joint_cap if cap is None else cap
    parents = skeleton.parents
    n = len(parents)
    out = []
    if n == 0:
        out.append(Violation("empty", None, "skeleton has no joints"))
        return ValidationReport(tuple(out))
    if n > cap:
        out.append(Violation("joint cap", None, f"{n} joints exceeds cap {cap}"))
    if skeleton.offsets.shape != (n, 3):
        out.append(Violation("shape", None, f"offsets shape {skeleton.offsets.shape} != ({n}, 3)"))
    else:
        for j in np.flatnonzero(~np.all(np.isfinite(skeleton.offsets), axis=1)):
            out.append(Violation("non-finite offset", int(j), "offset is not finite"))
    if len(skeleton.names) != n:
        out.append(Violation("shape", None, f"{len(skeleton.names)} names for {n} joints"))
    else:
        for j, name in enumerate(skeleton.names):
            if not name:
                out.append(Violation("empty name", j, "joint name is empty"))
    for attr in ("position_static", "rotation_static"):
        if getattr(skeleton, attr).shape != (n,):
            out.append(Violation("shape", None, f"{attr} has wrong length"))

    roots = [j for j, p in enumerate(parents) if p == ROOT]
    if not roots:
        out.append(Violation("no root", None, "no joint has the ROOT parent"))
    for j in roots[1:]:
        out.append(Violation("two roots", j, f"second root (first root is joint {roots[0]})"))
    bad_range = set()
    for j, p in enumerate(parents):
        if p != ROOT and not 0 <= p < n:
            bad_range.add(j)
            out.append(Violation("parent out of range", j, f"parent index {p} not in [0, {n})"))
        elif p == j:
            bad_range.add(j)
            out.append(Violation("cycle", j, "joint is its own parent"))

    # walk parent chains; a chain that revisits a joint is a cycle
    state = [0] * n  # 0 unseen, 1 on current path, 2 resolved
    reported = set()
    for start in range(n):
        path = []
        j = start
        while j != ROOT and j not in bad_range and state[j] == 0:
            state[j] = 1
            path.append(j)
            j = parents[j]
        if j != ROOT and j not in bad_range and state[j] == 1:
            cyc = path[path.index(j):]
            key = min(cyc)
            if key not in reported:
                reported.add(key)
                out.append(Violation("cycle", key, f"parent cycle through joints {sorted(cyc)}"))
        for k in path:
            state[k] = 2
    return ValidationReport(tuple(out))


def require_valid(skeleton):
    report = validate_skeleton(skeleton)
    if not report.ok:
        raise SkeletonError(f"invalid skeleton: {report.violations[0]}")
    return skeleton


def check_clip_shapes(skeleton, *clips):
    J = skeleton.joint_count
    frames = set()
    for clip in clips:
        if clip.joint_count != J:
            raise ShapeError(f"clip has {clip.joint_count} joints, skeleton has {J}")
        frames.add(clip.frames)
    if len(frames) > 1:
        raise ShapeError(f"clips disagree on frame count: {sorted(frames)}")


def detect_static_joints(skeleton, positions, rotations, eps_pos=EPS_POS, eps_rot=EPS_ROT_DEG):
    """Flag joints whose root-relative position (resp. local rotation) never
    departs from frame 0 by more than ``eps_pos`` (resp. ``eps_rot`` degrees).

    The two flags are computed independently. Masked joints are never static.
    """
    check_clip_shapes(skeleton, positions, rotations)
    root = skeleton.root
    p = positions.positions
    rel = p - p[:, root : root + 1, :]
    drift = np.linalg.norm(rel - rel[:1], axis=-1).max(axis=0)
    m = rotations.matrices()
    ang = np.degrees(geodesic_angle(m[:1], m)).max(axis=0)
    valid = positions.joint_mask & rotations.joint_mask
    return (drift <= eps_pos) & valid, (ang <= eps_rot) & valid


@dataclass(frozen=True)
class NormalizationTransform:
    """``normalized = scale * original + offset``."""

    scale: float
    offset: np.ndarray

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) * self.scale + self.offset

    def invert(self, points):
        return (np.asarray(points, dtype=np.float64) - self.offset) / self.scale


def normalize_clip(pose):
    """Uniformly scale and center a clip so its unmasked bounding box fits
    ``[-1, 1]^3``. A degenerate box keeps unit scale and is only centered.
    """
    mask = pose.joint_mask
    if not mask.any():
        raise ShapeError("normalize_clip needs at least one unmasked joint")
    pts = pose.positions[:, mask].reshape(-1, 3)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float(np.max(hi - lo))
    scale = 1.0 / half if half > 0 else 1.0
    tf = NormalizationTransform(scale, _frozen_array(-center * scale))
    return PoseClip(tf.apply(pose.positions), pose.joint_mask), tf


def rescale_for_eval(pose):
    """Normalized units to centimeters inside a 1 m^3 evaluation cube."""
    return PoseClip(pose.positions * CM_PER_UNIT, pose.joint_mask)
