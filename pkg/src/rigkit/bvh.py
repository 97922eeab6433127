"""BVH motion files: parsing, canonical writing, and conversion to and from
the skeleton/rotation-clip model.

Euler channels are composed as intrinsic rotations in the order listed in
the file, so ``CHANNELS 3 Zrotation Xrotation Yrotation`` means
``R = Rz(a) @ Rx(b) @ Ry(c)``. End Sites become zero-channel leaf joints
named ``<parent>_end``.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import BvhArityError, BvhSyntaxError, UnsupportedChannelsError
from .rotations import rot6d_to_matrix
from .skeleton import ROOT, RotationClip, Skeleton

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
VALID_CHANNELS = frozenset(POSITION_CHANNELS + ROTATION_CHANNELS)
END_SUFFIX = "_end"
DEFAULT_FRAME_TIME = 1.0 / 30.0
GIMBAL_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class BvhJoint:
    name: str
    parent: int
    offset: np.ndarray
    channels: tuple = ()
    end_site: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class BvhDocument:
    """Joints in file (depth-first) order and one motion row per frame."""

    joints: tuple
    frame_time: float = DEFAULT_FRAME_TIME
    motion: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        m = np.asarray(self.motion, dtype=np.float64).reshape(-1, self.channel_count)
        object.__setattr__(self, "motion", m)

    @property
    def channel_count(self):
        return sum(len(j.channels) for j in self.joints)

    @property
    def frame_count(self):
        return self.motion.shape[0]

    def children(self, index):
        return [i for i, j in enumerate(self.joints) if j.parent == index]


def documents_equal(a, b, atol=1e-6):
    """Structural equality with numeric fields compared within ``atol``."""
    if len(a.joints) != len(b.joints) or a.motion.shape != b.motion.shape:
        return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.name, ja.parent, tuple(ja.channels)) != (jb.name, jb.parent, tuple(jb.channels)):
            return False
        if not np.allclose(ja.offset, jb.offset, rtol=0, atol=atol):
            return False
        if (ja.end_site is None) != (jb.end_site is None):
            return False
        if ja.end_site is not None and not np.allclose(ja.end_site, jb.end_site, rtol=0, atol=atol):
            return False
    return abs(a.frame_time - b.frame_time) <= atol and np.allclose(a.motion, b.motion, rtol=0, atol=atol)


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"[{}]|[^\s{}]+")


class _Tokens:
    def __init__(self, lines):
        self.toks = []
        for ln, line in enumerate(lines, start=1):
            for m in _TOKEN.finditer(line):
                self.toks.append((m.group(), ln, m.start() + 1))
        self.i = 0
        last = len(lines)
        self.eof = (last if last else 1, (len(lines[-1]) + 1) if lines else 1)

    def peek(self):
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def pos(self):
        return self.toks[self.i][1:] if self.i < len(self.toks) else self.eof

    def next(self, expected):
        if self.i >= len(self.toks):
            line, col = self.eof
            raise BvhSyntaxError("unexpected end of file", line, col, expected)
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, word):
        tok, line, col = self.next(repr(word))
        if tok != word:
            raise BvhSyntaxError(f"found {tok!r}", line, col, repr(word))

    def number(self, what="number", integer=False):
        tok, line, col = self.next(what)
        try:
            if integer:
                val = int(tok)
            else:
                val = float(tok)
                if not np.isfinite(val):
                    raise ValueError
        except ValueError:
            raise BvhSyntaxError(f"found {tok!r}", line, col, what) from None
        return val


def _offset(toks):
    toks.expect("OFFSET")
    return np.array([toks.number("offset value") for _ in range(3)])


def _joint(toks, name, parent, joints, block_line, block_col):
    toks.expect("{")
    offset = _offset(toks)
    channels = ()
    if toks.peek() == "CHANNELS":
        toks.next("CHANNELS")
        n = toks.number("channel count", integer=True)
        if not 0 <= n <= 6:
            line, col = toks.toks[toks.i - 1][1:]
            raise BvhSyntaxError(f"channel count {n} out of range", line, col, "0..6")
        chans = []
        for _ in range(n):
            tok, line, col = toks.next("channel name")
            if tok not in VALID_CHANNELS:
                raise BvhSyntaxError(f"unknown channel {tok!r}", line, col, "one of " + ", ".join(sorted(VALID_CHANNELS)))
            chans.append(tok)
        channels = tuple(chans)
    index = len(joints)
    joints.append(BvhJoint(name, parent, offset, channels, None))
    end_site = None
    while True:
        tok = toks.peek()
        if tok is None:
            raise BvhSyntaxError(f"unterminated block for joint {name!r} opened at line {block_line}", *toks.eof, "'}'")
        if tok == "}":
            toks.next("'}'")
            break
        if tok == "JOINT":
            _, line, col = toks.next("JOINT")
            child, _, _ = toks.next("joint name")
            _joint(toks, child, index, joints, line, col)
        elif tok == "End":
            _, line, col = toks.next("End")
            toks.expect("Site")
            if end_site is not None:
                raise BvhSyntaxError("second End Site in one joint", line, col)
            toks.expect("{")
            end_site = _offset(toks)
            toks.expect("}")
        else:
            _, line, col = toks.next("")
            raise BvhSyntaxError(f"found {tok!r}", line, col, "JOINT, End Site or '}'")
    if end_site is not None:
        j = joints[index]
        joints[index] = BvhJoint(j.name, j.parent, j.offset, j.channels, end_site)


def parse_bvh(text):
    """Parse BVH text into a :class:`BvhDocument`.

    Syntax problems raise :class:`BvhSyntaxError` with line and column;
    motion rows of the wrong length raise :class:`BvhArityError`.
    """
    lines = text.splitlines()
    motion_line = None
    for i, line in enumerate(lines):
        if line.split()[:1] == ["MOTION"]:
            motion_line = i
            break
    head = lines if motion_line is None else lines[:motion_line]
    toks = _Tokens(head)
    toks.expect("HIERARCHY")
    tok, line, col = toks.next("ROOT")
    if tok != "ROOT":
        raise BvhSyntaxError(f"found {tok!r}", line, col, "'ROOT'")
    name, _, _ = toks.next("root name")
    joints = []
    _joint(toks, name, ROOT, joints, line, col)
    if toks.peek() is not None:
        tok, line, col = toks.next("")
        raise BvhSyntaxError(f"found {tok!r} after the root block", line, col, "'MOTION'")
    if motion_line is None:
        line, col = toks.eof
        raise BvhSyntaxError("missing MOTION section", line + 1, 1, "'MOTION'")

    rest = [(i + 1, ln) for i, ln in enumerate(lines) if i > motion_line]
    body = [(n, ln) for n, ln in rest if ln.strip()]
    hdr = _Tokens([])
    hdr.toks = [(m.group(), n, m.start() + 1) for n, ln in body[:2] for m in _TOKEN.finditer(ln)]
    hdr.eof = (motion_line + 2 + len(body[:2]), 1)
    hdr.expect("Frames:")
    frames = hdr.number("frame count", integer=True)
    frames_line, frames_col = hdr.toks[hdr.i - 1][1:]
    if frames < 0:
        line, col = frames_line, frames_col
        raise BvhSyntaxError(f"negative frame count {frames}", line, col, "non-negative integer")
    hdr.expect("Frame")
    hdr.expect("Time:")
    frame_time = hdr.number("frame time")
    if hdr.peek() is not None:
        tok, line, col = hdr.next("")
        raise BvhSyntaxError(f"found {tok!r}", line, col, "end of motion header")

    n_ch = sum(len(j.channels) for j in joints)
    rows = []
    for r, (ln_no, ln) in enumerate(body[2:]):
        vals = []
        for m in _TOKEN.finditer(ln):
            try:
                v = float(m.group())
                if not np.isfinite(v):
                    raise ValueError
            except ValueError:
                raise BvhSyntaxError(f"motion row {r}: found {m.group()!r}", ln_no, m.start() + 1, "number") from None
            vals.append(v)
        if len(vals) != n_ch:
            raise BvhArityError(f"expected {n_ch} values, found {len(vals)}", row=r, line=ln_no)
        rows.append(vals)
    if len(rows) != frames:
        raise BvhArityError(
            f"header declares {frames} frames but {len(rows)} motion rows follow", row=len(rows), line=frames_line
        )
    motion = np.array(rows, dtype=np.float64).reshape(len(rows), n_ch)
    return BvhDocument(tuple(joints), frame_time, motion)


def read_bvh(path):
    with open(path, encoding="utf-8") as fh:
        return parse_bvh(fh.read())


# --------------------------------------------------------------------------
# writing


def _fmt(x):
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_bvh(doc):
    """Canonical BVH text: tab indentation, six-decimal fixed-point numbers."""
    _check_document(doc)
    out = ["HIERARCHY"]

    def emit(index, depth):
        j = doc.joints[index]
        pad = "\t" * depth
        out.append(f"{pad}{'ROOT' if j.parent == ROOT else 'JOINT'} {j.name}")
        out.append(pad + "{")
        out.append(f"{pad}\tOFFSET {' '.join(_fmt(v) for v in j.offset)}")
        if j.channels or j.parent == ROOT:
            out.append(f"{pad}\tCHANNELS {len(j.channels)}" + "".join(f" {c}" for c in j.channels))
        for c in doc.children(index):
            emit(c, depth + 1)
        if j.end_site is not None:
            out.append(f"{pad}\tEnd Site")
            out.append(pad + "\t{")
            out.append(f"{pad}\t\tOFFSET {' '.join(_fmt(v) for v in j.end_site)}")
            out.append(pad + "\t}")
        out.append(pad + "}")

    emit(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {doc.frame_count}")
    out.append(f"Frame Time: {_fmt(doc.frame_time)}")
    for row in doc.motion:
        out.append(" ".join(_fmt(v) for v in row))
    return "\n".join(out) + "\n"


def _check_document(doc):
    if not doc.joints or doc.joints[0].parent != ROOT:
        raise ValueError("first joint must be the root")
    order = []

    def walk(i):
        order.append(i)
        for c in doc.children(i):
            walk(c)

    walk(0)
    if order != list(range(len(doc.joints))):
        raise ValueError("joints must be listed in depth-first order from the root")
    if doc.motion.shape[1] != doc.channel_count:
        raise BvhArityError(f"motion has {doc.motion.shape[1]} columns, hierarchy declares {doc.channel_count}")


# --------------------------------------------------------------------------
# model conversion


def _rotation_order(channels, name):
    rot = [c for c in channels if c in ROTATION_CHANNELS]
    if len(rot) not in (0, 3) or len(set(rot)) != len(rot):
        raise UnsupportedChannelsError(f"joint {name!r}: need zero or three distinct rotation channels, got {rot}")
    return "".join(c[0] for c in rot)


def bvh_to_model(doc):
    """Convert to ``(Skeleton, RotationClip)``.

    Root position channels are added to the root offset to give the root
    translation; position channels on other joints are not supported.
    """
    joints = doc.joints
    parents = [j.parent for j in joints]
    names = [j.name for j in joints]
    offsets = [j.offset for j in joints]
    for i, j in enumerate(joints):
        if j.end_site is not None:
            parents.append(i)
            names.append(j.name + END_SUFFIX)
            offsets.append(j.end_site)
    J = len(parents)
    T = doc.frame_count
    mats = np.tile(np.eye(3), (T, J, 1, 1))
    root_translation = np.tile(joints[0].offset, (T, 1))

    col = 0
    for i, j in enumerate(joints):
        order = _rotation_order(j.channels, j.name)
        pos = [c for c in j.channels if c in POSITION_CHANNELS]
        if pos and (i != 0 or len(set(pos)) != 3):
            raise UnsupportedChannelsError(f"joint {j.name!r}: position channels are only supported as a full set on the root")
        idx = {c: col + k for k, c in enumerate(j.channels)}
        col += len(j.channels)
        if order:
            angles = doc.motion[:, [idx[a + "rotation"] for a in order]]
            if T:
                mats[:, i] = Rotation.from_euler(order, angles, degrees=True).as_matrix()
        if pos:
            root_translation = root_translation + doc.motion[:, [idx[c] for c in POSITION_CHANNELS]]
    skeleton = Skeleton(parents, np.array(offsets), names)
    return skeleton, RotationClip.from_matrices(mats, root_translation)


def _check_order(channel_order):
    order = channel_order.upper()
    if sorted(order) != ["X", "Y", "Z"]:
        raise UnsupportedChannelsError(f"channel order must be a permutation of XYZ, got {channel_order!r}")
    return order


def matrices_to_euler(mats, channel_order):
    """Intrinsic Euler angles in degrees, middle angle within [-90, 90].

    At gimbal lock the third angle is zeroed; the returned flag marks those
    entries.
    """
    order = _check_order(channel_order)
    m = np.asarray(mats, dtype=np.float64)
    shape = m.shape[:-2]
    flat = m.reshape(-1, 3, 3)
    if flat.shape[0] == 0:
        return np.zeros(shape + (3,)), np.zeros(shape, dtype=bool)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        ang = Rotation.from_matrix(flat).as_euler(order, degrees=True)
    locked = np.abs(np.cos(np.radians(ang[:, 1]))) < GIMBAL_TOL
    return ang.reshape(shape + (3,)), locked.reshape(shape)


def _is_end_site(skeleton, j):
    p = skeleton.parents[j]
    return p != ROOT and not skeleton.children[j] and skeleton.names[j] == skeleton.names[p] + END_SUFFIX


def model_to_bvh(skeleton, clip, channel_order="ZXY", frame_time=DEFAULT_FRAME_TIME, return_flags=False):
    """Convert a model clip to a BVH document with rotation channels in
    ``channel_order`` on every joint and position channels on the root.

    With ``return_flags`` also returns a ``(T, J)`` gimbal-lock mask.
    """
    order = _check_order(channel_order)
    rot_channels = tuple(a + "rotation" for a in order)
    end_sites = {j for j in range(skeleton.joint_count) if _is_end_site(skeleton, j)}
    mats = rot6d_to_matrix(np.where(clip.joint_mask[None, :, None], clip.rot6d, [1.0, 0, 0, 0, 1.0, 0]))
    euler, locked = matrices_to_euler(mats, order)

    joints, columns, bvh_index = [], [], {}
    root = skeleton.root

    def walk(j, parent):
        bvh_index[j] = len(joints)
        chans = (POSITION_CHANNELS + rot_channels) if parent == ROOT else rot_channels
        joints.append([skeleton.names[j], parent, skeleton.offsets[j].copy(), chans, None])
        if parent == ROOT:
            columns.append(clip.root_translation - skeleton.offsets[j])
        columns.append(euler[:, j])
        me = bvh_index[j]
        for c in skeleton.children[j]:
            if c in end_sites:
                joints[me][4] = skeleton.offsets[c].copy()
            else:
                walk(c, me)

    walk(root, ROOT)
    motion = np.concatenate(columns, axis=1) if clip.frames else np.zeros((0, sum(len(j[3]) for j in joints)))
    doc = BvhDocument(tuple(BvhJoint(*j) for j in joints), frame_time, motion)
    if return_flags:
        return doc, locked
    return doc


# --------------------------------------------------------------------------
# axis / unit canonicalization

_AXES = {"x": 0, "y": 1, "z": 2}


def axis_remap_matrix(spec):
    """Signed permutation from a string like ``"x,z,-y"``: new x = old x,
    new y = old z, new z = -old y."""
    parts = [p.strip().lower() for p in spec.split(",")]
    if len(parts) != 3:
        raise ValueError(f"axis remap needs three comma-separated axes, got {spec!r}")
    A = np.zeros((3, 3))
    for row, part in enumerate(parts):
        sign = -1.0 if part.startswith("-") else 1.0
        axis = part.lstrip("+-")
        if axis not in _AXES:
            raise ValueError(f"bad axis {part!r} in remap {spec!r}")
        A[row, _AXES[axis]] = sign
    if not np.allclose(np.abs(A).sum(axis=0), 1.0):
        raise ValueError(f"axis remap {spec!r} must use each axis exactly once")
    return A


def invert_axis_remap(spec):
    A = axis_remap_matrix(spec).T
    names = "xyz"
    out = []
    for row in A:
        k = int(np.flatnonzero(row)[0])
        out.append(("-" if row[k] < 0 else "") + names[k])
    return ",".join(out)


def remap_axes(skeleton, clip, remap=None, unit_scale=1.0):
    """Change world axes and units: positions ``p -> s * A p`` and local
    rotations ``R -> A R A^T``; FK positions transform the same way."""
    A = np.eye(3) if remap is None else (axis_remap_matrix(remap) if isinstance(remap, str) else np.asarray(remap))
    R = rot6d_to_matrix(np.where(clip.joint_mask[None, :, None], clip.rot6d, [1.0, 0, 0, 0, 1.0, 0]))
    R2 = A @ R @ A.T
    new_skel = Skeleton(
        skeleton.parents,
        unit_scale * skeleton.offsets @ A.T,
        skeleton.names,
        skeleton.position_static,
        skeleton.rotation_static,
        skeleton.joint_cap,
    )
    new_clip = RotationClip.from_matrices(R2, unit_scale * clip.root_translation @ A.T, clip.joint_mask)
    return new_skel, new_clip
