"""Arbitrary-skeleton motion toolkit: skeletons, 6D rotations, forward and
reference-anchored inverse kinematics, graph-attention kernels, metrics and
BVH interchange."""
from .skeleton import (
    ROOT,
    PoseClip,
    ReferenceFrame,
    RotationClip,
    Skeleton,
    detect_static_joints,
    normalize_clip,
    rescale_for_eval,
    validate_skeleton,
)
from .kinematics import (
    AxisConvention,
    analytic_ik_reference,
    forward_kinematics,
    rerig_axis_convention,
)

__version__ = "0.1.0"
