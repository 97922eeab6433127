"""Forward kinematics, the reference-anchored analytical pose-to-rotation
solver, and axis-convention re-rigging."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecodeError, ReferenceMismatchError, ShapeError
from .rotations import (
    matrix_to_rot6d,
    procrustes_rotation,
    rot6d_to_matrix,
    shortest_arc,
)
from .skeleton import (
    ROOT,
    PoseClip,
    RotationClip,
    Skeleton,
    check_clip_shapes,
    require_valid,
)

EPS_LEN = 1e-6
REFERENCE_TOL = 1e-6
_IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


@dataclass(frozen=True, eq=False)
class GlobalTransforms:
    rotations: np.ndarray  # (T, J, 3, 3)
    positions: np.ndarray  # (T, J, 3)


@dataclass(frozen=True, eq=False)
class AxisConvention:
    """Per-joint change of local axes, one rotation matrix per joint."""

    matrices: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=np.float64)
        if m.ndim != 3 or m.shape[1:] != (3, 3):
            raise ShapeError(f"axis convention must be (J, 3, 3), got {m.shape}")
        m.flags.writeable = False
        object.__setattr__(self, "matrices", m)

    @classmethod
    def identity(cls, joint_count):
        return cls(np.tile(np.eye(3), (joint_count, 1, 1)))

    def inverse(self):
        return AxisConvention(np.swapaxes(self.matrices, -1, -2))

    def compose(self, other):
        """Convention equivalent to applying ``self`` and then ``other``."""
        return AxisConvention(self.matrices @ other.matrices)


def decode_motion(motion):
    """Decode every unmasked 6D entry; masked entries become identity."""
    r6 = np.where(motion.joint_mask[None, :, None], motion.rot6d, _IDENTITY_6D)
    try:
        return rot6d_to_matrix(r6)
    except DecodeError:
        pass
    for t in range(r6.shape[0]):
        for j in range(r6.shape[1]):
            try:
                rot6d_to_matrix(r6[t, j])
            except DecodeError as exc:
                raise DecodeError(str(exc).split(" at index")[0], frame=t, joint=j) from None
    raise AssertionError("unreachable")


def _forward(skeleton, local, root_translation):
    T, J = local.shape[:2]
    G = np.empty((T, J, 3, 3))
    P = np.empty((T, J, 3))
    offsets = skeleton.offsets
    for j in skeleton.topological_order:
        p = skeleton.parents[j]
        if p == ROOT:
            G[:, j] = local[:, j]
            P[:, j] = root_translation
        else:
            G[:, j] = G[:, p] @ local[:, j]
            P[:, j] = P[:, p] + G[:, p] @ offsets[j]
    return G, P


def forward_kinematics(skeleton, motion):
    """Compose local rotations down the tree.

    ``G_j = G_parent @ R_j`` and ``p_j = p_parent + G_parent @ o_j``; the root
    takes its rotation directly and its position from the root translation.
    """
    require_valid(skeleton)
    check_clip_shapes(skeleton, motion)
    G, P = _forward(skeleton, decode_motion(motion), motion.root_translation)
    return PoseClip(P, motion.joint_mask), GlobalTransforms(G, P)


def check_reference(skeleton, ref, tol=REFERENCE_TOL):
    J = skeleton.joint_count
    if ref.ref_positions.shape != (J, 3) or ref.ref_rot6d.shape != (J, 6):
        raise ReferenceMismatchError(
            f"reference shapes {ref.ref_positions.shape}/{ref.ref_rot6d.shape} do not match {J} joints"
        )
    motion = RotationClip(ref.ref_rot6d[None], ref.ref_root_translation[None])
    G, P = _forward(skeleton, decode_motion(motion), motion.root_translation)
    err = np.linalg.norm(P[0] - ref.ref_positions, axis=-1)
    worst = int(np.argmax(err))
    if err[worst] > tol:
        raise ReferenceMismatchError(
            f"FK of the reference rotations misses the reference positions by {err[worst]:.3g}", joint=worst
        )
    return G[0]


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def analytic_ik_reference(skeleton, pose, ref, eps_len=EPS_LEN):
    """Recover local rotations from joint positions, anchored to a reference pair.

    For each joint the rotation ``D`` carrying the reference child-bone
    directions onto the posed ones is found (shortest arc for one child,
    Procrustes for several, inherited from the parent at leaves), and the
    global rotation is ``D @ G_ref``. Twist about a single-child bone is
    therefore zero relative to the reference. Rotation-static joints keep
    their reference local rotation.
    """
    require_valid(skeleton)
    check_clip_shapes(skeleton, pose)
    G_ref = check_reference(skeleton, ref)
    R_ref = decode_motion(RotationClip(ref.ref_rot6d[None]))[0]
    p_ref = ref.ref_positions
    P = pose.positions
    mask = pose.joint_mask
    T, J = P.shape[:2]
    parents = skeleton.parents

    D = np.empty((T, J, 3, 3))
    G = np.empty((T, J, 3, 3))
    local = np.empty((T, J, 3, 3))
    for j in skeleton.topological_order:
        par = parents[j]
        if par == ROOT:
            fallback = np.array([0.0, 0.0, 1.0])
        else:
            bone = p_ref[j] - p_ref[par]
            n = np.linalg.norm(bone)
            fallback = bone / n if n > eps_len else np.array([0.0, 0.0, 1.0])

        kids, u = [], []
        if mask[j]:
            for c in skeleton.children[j]:
                if not mask[c]:
                    continue
                ref_bone = p_ref[c] - p_ref[j]
                ref_len = np.linalg.norm(ref_bone)
                if ref_len <= eps_len:
                    pose_len = np.linalg.norm(P[:, c] - P[:, j], axis=-1)
                    if np.any(pose_len > eps_len):
                        raise ReferenceMismatchError(
                            "reference bone has zero length but the posed bone does not", joint=c
                        )
                    continue
                kids.append(c)
                u.append(ref_bone / ref_len)

        if not kids:
            D[:, j] = np.eye(3) if par == ROOT else D[:, par]
        else:
            u = np.array(u)
            vec = P[:, kids] - P[:, j : j + 1]
            lens = np.linalg.norm(vec, axis=-1)
            present = lens > eps_len
            v = vec / np.where(present, lens, 1.0)[..., None]
            D[:, j] = _align(u, v, present, fallback)

        G[:, j] = D[:, j] @ G_ref[j]
        if skeleton.rotation_static[j]:
            G[:, j] = R_ref[j] if par == ROOT else G[:, par] @ R_ref[j]
            D[:, j] = G[:, j] @ G_ref[j].T
        local[:, j] = G[:, j] if par == ROOT else np.swapaxes(G[:, par], -1, -2) @ G[:, j]

    root = skeleton.root
    local[:, ~mask] = R_ref[~mask]
    return RotationClip(matrix_to_rot6d(local, check=False), P[:, root].copy(), mask)


def _align(u, v, present, fallback):
    """Per-frame rotation taking reference directions ``u`` (K, 3) onto posed
    directions ``v`` (T, K, 3); identity where no posed direction exists."""
    T, K = present.shape
    out = np.tile(np.eye(3), (T, 1, 1))
    full = present.all(axis=1)
    if full.any():
        if K == 1:
            out[full] = shortest_arc(u[0], v[full, 0], fallback)
        else:
            out[full] = procrustes_rotation(u, v[full], fallback_axis=fallback)
    for t in np.flatnonzero(~full & present.any(axis=1)):
        sel = present[t]
        if sel.sum() == 1:
            out[t] = shortest_arc(u[sel][0], v[t, sel][0], fallback)
        else:
            out[t] = procrustes_rotation(u[sel], v[t, sel], fallback_axis=fallback)
    return out


def rerig_axis_convention(skeleton, motion, conv):
    """Re-express a motion under new per-joint local axes.

    With ``C_j`` the new axes of joint ``j``: ``o'_j = C_parent^T o_j`` and
    ``R'_j = C_parent^T R_j C_j`` (identity for the root's virtual parent).
    Global positions are unchanged; local rotations are not.
    """
    require_valid(skeleton)
    check_clip_shapes(skeleton, motion)
    C = conv.matrices
    if C.shape[0] != skeleton.joint_count:
        raise ShapeError(f"axis convention has {C.shape[0]} joints, skeleton has {skeleton.joint_count}")
    R = decode_motion(motion)
    parents = np.array(skeleton.parents)
    par_C = np.where((parents == ROOT)[:, None, None], np.eye(3), C[np.maximum(parents, 0)])
    par_Ct = np.swapaxes(par_C, -1, -2)
    new_offsets = np.einsum("jab,jb->ja", par_Ct, skeleton.offsets)
    new_R = par_Ct[None] @ R @ C[None]
    new_skeleton = Skeleton(
        skeleton.parents,
        new_offsets,
        skeleton.names,
        skeleton.position_static,
        skeleton.rotation_static,
        skeleton.joint_cap,
    )
    new_motion = RotationClip(
        matrix_to_rot6d(new_R, check=False), motion.root_translation, motion.joint_mask
    )
    return new_skeleton, new_motion
