"""Evaluation metrics, training-loss composition and the mixed-pose schedule."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError
from .rotations import geodesic_angle, relative_rotation, rot6d_to_matrix
from .skeleton import CM_PER_UNIT


@dataclass(frozen=True)
class LossWeights:
    pos: float = 1.0
    rot: float = 1.0
    rot_v: float = 1.0
    root: float = 0.1

    def __post_init__(self):
        vals = np.array([self.pos, self.rot, self.rot_v, self.root])
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("loss weights must be finite and non-negative")

    def as_array(self):
        return np.array([self.pos, self.rot, self.rot_v, self.root])


@dataclass(frozen=True)
class LossComponents:
    pos: float
    rot: float
    rot_v: float
    root: float

    def as_array(self):
        return np.array([self.pos, self.rot, self.rot_v, self.root])


@dataclass(frozen=True)
class MixSchedule:
    p_start: float = 0.1
    p_end: float = 1.0
    warmup_epochs: int = 30

    def __post_init__(self):
        if not 0.0 <= self.p_start <= self.p_end <= 1.0:
            raise ValueError("need 0 <= p_start <= p_end <= 1")
        if self.warmup_epochs < 1:
            raise ValueError("warmup_epochs must be a positive integer")


@dataclass(frozen=True)
class MetricReport:
    mpjpe_cm: float
    mpjve_cm: float
    ang_err_deg: float
    angv_err_deg: float
    per_joint_mpjpe_cm: tuple
    per_joint_mpjve_cm: tuple
    per_joint_ang_err_deg: tuple
    per_joint_angv_err_deg: tuple

    def to_dict(self):
        return asdict(self)


def _arrays(pred, gt, attr):
    a = getattr(pred, attr) if hasattr(pred, attr) else np.asarray(pred, dtype=np.float64)
    b = getattr(gt, attr) if hasattr(gt, attr) else np.asarray(gt, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"prediction shape {a.shape} != ground truth shape {b.shape}")
    return a, b


def _mask(pred, gt, mask, J):
    if mask is None:
        mask = np.ones(J, dtype=bool)
        for clip in (pred, gt):
            if hasattr(clip, "joint_mask"):
                mask = mask & clip.joint_mask
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (J,):
        raise ShapeError(f"mask must have shape ({J},), got {mask.shape}")
    if not mask.any():
        raise ShapeError("mask selects no joints")
    return mask


def _need_two_frames(T):
    if T < 2:
        raise ShapeError("velocity metrics need at least 2 frames")


def position_errors(pred, gt):
    """Per-frame, per-joint Euclidean distance in normalized units."""
    a, b = _arrays(pred, gt, "positions")
    return np.linalg.norm(a - b, axis=-1)


def velocity_errors(pred, gt):
    a, b = _arrays(pred, gt, "positions")
    _need_two_frames(a.shape[0])
    return np.linalg.norm(np.diff(a, axis=0) - np.diff(b, axis=0), axis=-1)


def rotation_errors(pred, gt):
    """Per-frame, per-joint geodesic error in radians."""
    a, b = _arrays(pred, gt, "rot6d")
    return geodesic_angle(rot6d_to_matrix(a), rot6d_to_matrix(b))


def angular_velocity_errors(pred, gt):
    """Geodesic gap between predicted and true frame-to-frame relative rotations."""
    a, b = _arrays(pred, gt, "rot6d")
    _need_two_frames(a.shape[0])
    ma, mb = rot6d_to_matrix(a), rot6d_to_matrix(b)
    da = relative_rotation(ma[:-1], ma[1:])
    db = relative_rotation(mb[:-1], mb[1:])
    return geodesic_angle(da, db)


def mpjpe(pred, gt, mask=None):
    # scale before averaging so uniform offsets report exact centimetres
    err = position_errors(pred, gt)
    m = _mask(pred, gt, mask, err.shape[1])
    return float((err[:, m] * CM_PER_UNIT).mean())


def mpjve(pred, gt, mask=None):
    err = velocity_errors(pred, gt)
    m = _mask(pred, gt, mask, err.shape[1])
    return float((err[:, m] * CM_PER_UNIT).mean())


def angle_error(pred, gt, mask=None):
    err = rotation_errors(pred, gt)
    m = _mask(pred, gt, mask, err.shape[1])
    return float(np.degrees(err[:, m].mean()))


def angular_velocity_error(pred, gt, mask=None):
    err = angular_velocity_errors(pred, gt)
    m = _mask(pred, gt, mask, err.shape[1])
    return float(np.degrees(err[:, m].mean()))


def evaluate(pred_pose, gt_pose, pred_rot, gt_rot, mask=None):
    """All four metrics with per-joint breakdowns (masked joints report nan)."""
    J = gt_pose.positions.shape[1] if hasattr(gt_pose, "positions") else np.shape(gt_pose)[1]
    m = _mask(pred_pose, gt_pose, mask, J)
    m = _mask(pred_rot, gt_rot, m, J)

    def per_joint(err, scale):
        col = (err * scale).mean(axis=0)
        return tuple(float(x) if keep else float("nan") for x, keep in zip(col, m))

    pe = position_errors(pred_pose, gt_pose)
    re = rotation_errors(pred_rot, gt_rot)
    T = pe.shape[0]
    if T >= 2:
        ve = velocity_errors(pred_pose, gt_pose)
        ave = angular_velocity_errors(pred_rot, gt_rot)
        mpjve_cm = float((ve[:, m] * CM_PER_UNIT).mean())
        angv = float(np.degrees(ave[:, m].mean()))
        ve_j, ave_j = per_joint(ve, CM_PER_UNIT), per_joint(np.degrees(ave), 1.0)
    else:
        mpjve_cm = angv = float("nan")
        ve_j = ave_j = tuple(float("nan") for _ in range(J))
    return MetricReport(
        mpjpe_cm=float((pe[:, m] * CM_PER_UNIT).mean()),
        mpjve_cm=mpjve_cm,
        ang_err_deg=float(np.degrees(re[:, m].mean())),
        angv_err_deg=angv,
        per_joint_mpjpe_cm=per_joint(pe, CM_PER_UNIT),
        per_joint_mpjve_cm=ve_j,
        per_joint_ang_err_deg=per_joint(np.degrees(re), 1.0),
        per_joint_angv_err_deg=ave_j,
    )


def loss_components(pred_pose, gt_pose, pred_rot, gt_rot, mask=None, root=0):
    """Position loss in normalized units; rotation losses in radians."""
    pe = position_errors(pred_pose, gt_pose)
    re = rotation_errors(pred_rot, gt_rot)
    if pe.shape != re.shape:
        raise ShapeError(f"pose clip {pe.shape} and rotation clip {re.shape} disagree")
    m = _mask(pred_pose, gt_pose, mask, pe.shape[1])
    m = _mask(pred_rot, gt_rot, m, pe.shape[1])
    rot_v = float(angular_velocity_errors(pred_rot, gt_rot)[:, m].mean()) if pe.shape[0] >= 2 else 0.0
    root_err = float(re[:, root].mean()) if m[root] else 0.0
    return LossComponents(
        pos=float(pe[:, m].mean()),
        rot=float(re[:, m].mean()),
        rot_v=rot_v,
        root=root_err,
    )


def combine_losses(components, weights=LossWeights()):
    c, w = components, weights
    return w.pos * c.pos + w.rot * c.rot + w.rot_v * c.rot_v + w.root * c.root


def total_loss(pred_pose, gt_pose, pred_rot, gt_rot, weights=LossWeights(), mask=None, root=0):
    comps = loss_components(pred_pose, gt_pose, pred_rot, gt_rot, mask, root)
    return combine_losses(comps, weights), comps


def mixed_pose_probability(epoch, schedule=MixSchedule()):
    """Probability of feeding predicted (rather than ground-truth) poses to
    the rotation stage at ``epoch``: a linear ramp that saturates after the
    warm-up."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    s = schedule
    return s.p_start + (s.p_end - s.p_start) * min(1.0, epoch / s.warmup_epochs)
