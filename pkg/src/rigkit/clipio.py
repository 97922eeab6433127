"""JSON clip and reference files.

A clip file holds ``skeleton`` (``parents`` with -1 for the root,
``offsets``, ``names`` and optional static flags), ``frames``, ``rot6d``,
``root_translation``, optional ``positions``, ``masks.joint_mask`` and a
free-form ``meta`` object. Floats are written with ``repr`` precision.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import RigkitError
from .skeleton import PoseClip, ReferenceFrame, RotationClip, Skeleton


class ClipFormatError(RigkitError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClipFile:
    skeleton: Skeleton
    motion: RotationClip | None = None
    pose: PoseClip | None = None
    meta: dict = field(default_factory=dict)

    @property
    def frames(self):
        clip = self.motion if self.motion is not None else self.pose
        return clip.frames if clip is not None else 0


def skeleton_to_dict(skeleton):
    return {
        "parents": list(skeleton.parents),
        "offsets": skeleton.offsets.tolist(),
        "names": list(skeleton.names),
        "position_static": skeleton.position_static.tolist(),
        "rotation_static": skeleton.rotation_static.tolist(),
    }


def skeleton_from_dict(d):
    try:
        parents = [int(p) for p in d["parents"]]
        offsets = np.asarray(d["offsets"], dtype=np.float64).reshape(len(parents), 3)
        return Skeleton(
            parents,
            offsets,
            d.get("names"),
            d.get("position_static"),
            d.get("rotation_static"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ClipFormatError(f"malformed skeleton: {exc}") from None


def clip_to_dict(clip):
    out = {"skeleton": skeleton_to_dict(clip.skeleton), "frames": clip.frames}
    mask = None
    if clip.motion is not None:
        out["rot6d"] = clip.motion.rot6d.tolist()
        out["root_translation"] = clip.motion.root_translation.tolist()
        mask = clip.motion.joint_mask
    if clip.pose is not None:
        out["positions"] = clip.pose.positions.tolist()
        mask = clip.pose.joint_mask if mask is None else mask
    if mask is not None:
        out["masks"] = {"joint_mask": mask.tolist()}
    if clip.meta:
        out["meta"] = clip.meta
    return out


def clip_from_dict(d):
    if not isinstance(d, dict) or "skeleton" not in d:
        raise ClipFormatError("clip document needs a 'skeleton' object")
    skeleton = skeleton_from_dict(d["skeleton"])
    J = skeleton.joint_count
    mask = d.get("masks", {}).get("joint_mask")
    try:
        frames = int(d.get("frames", 0))
        motion = pose = None
        if "rot6d" in d:
            r6 = np.asarray(d["rot6d"], dtype=np.float64).reshape(frames, J, 6)
            tr = np.asarray(d.get("root_translation", np.zeros((frames, 3))), dtype=np.float64).reshape(frames, 3)
            motion = RotationClip(r6, tr, mask)
        if "positions" in d:
            pos = np.asarray(d["positions"], dtype=np.float64).reshape(frames, J, 3)
            pose = PoseClip(pos, mask)
    except (TypeError, ValueError) as exc:
        raise ClipFormatError(f"malformed clip arrays: {exc}") from None
    return ClipFile(skeleton, motion, pose, dict(d.get("meta", {})))


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ClipFormatError(f"{path}: invalid JSON ({exc})") from None


def load_clip(path):
    return clip_from_dict(_load_json(path))


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(obj):
    try:
        return json.dumps(obj, allow_nan=False) + "\n"
    except ValueError as exc:
        raise ClipFormatError(f"refusing to serialize non-finite numbers: {exc}") from None


def save_clip(path, clip):
    atomic_write_text(path, dumps_json(clip_to_dict(clip)))


def reference_to_dict(ref):
    return {
        "ref_positions": ref.ref_positions.tolist(),
        "ref_rot6d": ref.ref_rot6d.tolist(),
        "ref_root_translation": ref.ref_root_translation.tolist(),
    }


def is_reference_document(d):
    return isinstance(d, dict) and "ref_rot6d" in d


def reference_from_dict(d):
    try:
        return ReferenceFrame(d["ref_positions"], d["ref_rot6d"], d["ref_root_translation"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ClipFormatError(f"malformed reference: {exc}") from None


def save_reference(path, ref):
    atomic_write_text(path, dumps_json(reference_to_dict(ref)))


def load_reference(path, frame=None):
    """A standalone reference file, or frame ``frame`` (default 0) of a clip
    that carries both rotations and positions (positions are recomputed by
    FK when absent)."""
    d = _load_json(path)
    if is_reference_document(d):
        return reference_from_dict(d)
    clip = clip_from_dict(d)
    if clip.motion is None:
        raise ClipFormatError(f"{path}: reference clip has no rotations")
    frame = 0 if frame is None else frame
    if not 0 <= frame < clip.frames:
        raise ClipFormatError(f"{path}: reference frame {frame} out of range [0, {clip.frames})")
    pose = clip.pose
    if pose is None:
        from .kinematics import forward_kinematics

        pose, _ = forward_kinematics(clip.skeleton, clip.motion)
    return ReferenceFrame.from_clip(pose, clip.motion, frame)
