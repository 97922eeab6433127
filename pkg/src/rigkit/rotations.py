"""Rotation representations and algebra.

Conventions
-----------
- Matrices act on column vectors: ``v_world = R @ v_local``.
- The 6D form of a matrix is its first two columns stacked, ``(R[:, 0], R[:, 1])``.
- Quaternions are ``(w, x, y, z)`` and canonicalized to ``w >= 0``.
- Every function accepts arbitrary leading batch dimensions.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DecodeError, ShapeError

ORTHO_TOL = 1e-6
UNIT_TOL = 1e-9
ANTIPODAL_TOL = 1e-9
_DECODE_EPS = 1e-12


def _first_bad_index(bad):
    idx = np.argwhere(bad)
    return tuple(int(i) for i in idx[0]) if idx.size else None


def rot6d_to_matrix(r6):
    """Decode 6D rotations with Gram-Schmidt.

    Raises DecodeError if the first vector vanishes or the second is
    parallel to it.
    """
    r6 = np.asarray(r6, dtype=np.float64)
    if r6.shape[-1] != 6:
        raise ShapeError(f"6D rotation must have 6 components, got shape {r6.shape}")
    a1, a2 = r6[..., :3], r6[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1)
    bad = ~(n1 > _DECODE_EPS) | ~np.all(np.isfinite(r6), axis=-1)
    if np.any(bad):
        raise DecodeError(f"first 6D column is zero or non-finite at index {_first_bad_index(bad)}")
    b1 = a1 / n1[..., None]
    a2_perp = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(a2_perp, axis=-1)
    bad = ~(n2 > _DECODE_EPS * np.maximum(np.linalg.norm(a2, axis=-1), 1.0))
    if np.any(bad):
        raise DecodeError(
            f"second 6D column is zero or parallel to the first at index {_first_bad_index(bad)}"
        )
    b2 = a2_perp / n2[..., None]
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def is_rotation_matrix(m, tol=ORTHO_TOL):
    m = np.asarray(m, dtype=np.float64)
    eye = np.eye(3)
    ortho = np.max(np.abs(np.swapaxes(m, -1, -2) @ m - eye), axis=(-2, -1)) <= tol
    det = np.abs(np.linalg.det(m) - 1.0) <= tol
    return ortho & det & np.all(np.isfinite(m), axis=(-2, -1))


def matrix_to_rot6d(m, check=True):
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) matrices, got {m.shape}")
    if check and not np.all(is_rotation_matrix(m)):
        raise ValueError("input is not a valid rotation matrix")
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def matrix_to_quat(m):
    """Shepperd's method; stable for every rotation angle."""
    m = np.asarray(m, dtype=np.float64)
    m00, m11, m22 = m[..., 0, 0], m[..., 1, 1], m[..., 2, 2]
    tr = m00 + m11 + m22
    cands = np.stack([
        np.stack([1.0 + tr, m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]], -1),
        np.stack([m[..., 2, 1] - m[..., 1, 2], 1.0 + m00 - m11 - m22, m[..., 0, 1] + m[..., 1, 0], m[..., 0, 2] + m[..., 2, 0]], -1),
        np.stack([m[..., 0, 2] - m[..., 2, 0], m[..., 0, 1] + m[..., 1, 0], 1.0 - m00 + m11 - m22, m[..., 1, 2] + m[..., 2, 1]], -1),
        np.stack([m[..., 1, 0] - m[..., 0, 1], m[..., 0, 2] + m[..., 2, 0], m[..., 1, 2] + m[..., 2, 1], 1.0 - m00 - m11 + m22], -1),
    ], axis=-2)
    choice = np.argmax(np.stack([tr, m00, m11, m22], -1), axis=-1)
    q = np.take_along_axis(cands, choice[..., None, None], axis=-2)[..., 0, :]
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return canonicalize_quat(q)


def canonicalize_quat(q):
    q = np.asarray(q, dtype=np.float64)
    return np.where(q[..., :1] < 0, -q, q)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], axis=-2)


def quat_multiply(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def axis_angle_to_matrix(rotvec):
    """Rodrigues' formula for rotation vectors (axis scaled by angle)."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    angle = np.linalg.norm(rotvec, axis=-1)
    half = 0.5 * angle
    # sin(x/2)/x, with its Taylor series near zero
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / safe)
    q = np.concatenate([np.cos(half)[..., None], rotvec * k[..., None]], axis=-1)
    return quat_to_matrix(q)


def axis_rotation(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    return axis_angle_to_matrix(axis * np.asarray(angle, dtype=np.float64)[..., None])


def rot_x(angle):
    return axis_rotation([1.0, 0.0, 0.0], angle)


def rot_y(angle):
    return axis_rotation([0.0, 1.0, 0.0], angle)


def rot_z(angle):
    return axis_rotation([0.0, 0.0, 1.0], angle)


def random_rotations(rng, size=()):
    """Uniformly distributed rotations via normalized Gaussian quaternions."""
    size = (size,) if np.isscalar(size) else tuple(size)
    q = rng.standard_normal(size + (4,))
    return quat_to_matrix(q / np.linalg.norm(q, axis=-1, keepdims=True))


def relative_rotation(a, b):
    """Rotation taking ``a`` to ``b`` in ``a``'s frame: ``a.T @ b``."""
    a = np.asarray(a, dtype=np.float64)
    return np.swapaxes(a, -1, -2) @ np.asarray(b, dtype=np.float64)


def rotation_angle(m):
    q = matrix_to_quat(m)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def geodesic_angle(a, b):
    """Geodesic distance on SO(3) in radians, in ``[0, pi]``.

    Uses ``2 * atan2(|v|, |w|)`` on the quaternion of ``a.T @ b``, which keeps
    full precision near both 0 and pi.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    same = np.all(a == b, axis=(-2, -1))
    return np.where(same, 0.0, rotation_angle(relative_rotation(a, b)))


def _check_unit(v, name):
    n = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(n - 1.0) > UNIT_TOL):
        raise ValueError(f"{name} must be unit length")


def _any_perpendicular(u):
    # basis vector least aligned with u, then orthogonalized
    idx = np.argmin(np.abs(u), axis=-1)
    e = np.zeros_like(u)
    np.put_along_axis(e, idx[..., None], 1.0, axis=-1)
    p = e - np.sum(e * u, axis=-1, keepdims=True) * u
    return p / np.linalg.norm(p, axis=-1, keepdims=True)


def shortest_arc(u, v, fallback_axis=(0.0, 0.0, 1.0)):
    """Minimal-angle rotation taking unit vector ``u`` onto unit vector ``v``.

    When ``u`` and ``v`` are antipodal the half-turn axis is ``fallback_axis``
    made perpendicular to ``u``; if that is parallel to ``u`` a fixed
    perpendicular is used instead.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    f = np.broadcast_to(np.asarray(fallback_axis, dtype=np.float64), np.broadcast_shapes(u.shape, v.shape))
    _check_unit(u, "u")
    _check_unit(v, "v")
    _check_unit(f, "fallback_axis")
    u, v = np.broadcast_arrays(u, v)
    c = np.sum(u * v, axis=-1)
    antipodal = c < -1.0 + ANTIPODAL_TOL

    q = np.concatenate([(1.0 + c)[..., None], np.cross(u, v)], axis=-1)
    if np.any(antipodal):
        perp = f - np.sum(f * u, axis=-1, keepdims=True) * u
        pn = np.linalg.norm(perp, axis=-1, keepdims=True)
        perp = np.where(pn > 1e-9, perp / np.where(pn > 1e-9, pn, 1.0), _any_perpendicular(u))
        half_turn = np.concatenate([np.zeros(c.shape + (1,)), perp], axis=-1)
        q = np.where(antipodal[..., None], half_turn, q)
    return quat_to_matrix(q)


class SwingTwist(NamedTuple):
    swing: np.ndarray
    twist: np.ndarray
    degenerate: np.ndarray


def swing_twist(m, axis):
    """Factor ``m = swing @ twist`` where ``twist`` rotates about ``axis``.

    ``degenerate`` marks rotations that send ``axis`` to its antipode; their
    twist is undefined and returned as identity.
    """
    axis = np.asarray(axis, dtype=np.float64)
    _check_unit(axis, "axis")
    q = matrix_to_quat(m)
    a = np.broadcast_to(axis, q[..., 1:].shape)
    proj = np.sum(q[..., 1:] * a, axis=-1, keepdims=True) * a
    tq = np.concatenate([q[..., :1], proj], axis=-1)
    n = np.linalg.norm(tq, axis=-1, keepdims=True)
    degenerate = n[..., 0] < ANTIPODAL_TOL
    ident = np.zeros_like(tq)
    ident[..., 0] = 1.0
    tq = np.where(degenerate[..., None], ident, tq / np.where(degenerate[..., None], 1.0, n))
    sq = quat_multiply(q, quat_conjugate(tq))
    return SwingTwist(quat_to_matrix(sq), quat_to_matrix(tq), degenerate)


def procrustes_rotation(source_dirs, target_dirs, weights=None, fallback_axis=(0.0, 0.0, 1.0), rank_tol=1e-10):
    """Proper rotation minimizing ``sum_i w_i |R s_i - t_i|^2``.

    ``source_dirs`` and ``target_dirs`` have shape ``(..., N, 3)``. When the
    problem is rank deficient (all pairs along one line) the minimizer is
    unique only up to a twist about that line; the zero-twist solution given
    by :func:`shortest_arc` is returned.
    """
    s = np.asarray(source_dirs, dtype=np.float64)
    t = np.asarray(target_dirs, dtype=np.float64)
    if s.shape[-2] == 0 or t.shape[-2] == 0:
        raise ValueError("procrustes_rotation needs at least one direction pair")
    if s.shape[-2] != t.shape[-2]:
        raise ValueError(f"direction counts differ: {s.shape[-2]} vs {t.shape[-2]}")
    n = s.shape[-2]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape[-1] != n or np.any(w <= 0):
        raise ValueError("weights must be positive, one per pair")
    s, t = np.broadcast_arrays(s, t)
    if n == 1:
        return shortest_arc(s[..., 0, :], t[..., 0, :], fallback_axis)

    M = np.einsum("...n,...ni,...nj->...ij", np.broadcast_to(w, s.shape[:-1]), t, s)
    U, S, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    d = np.where(d == 0, 1.0, d)
    U = U.copy()
    U[..., :, 2] *= d[..., None]
    R = U @ Vt

    rank1 = S[..., 1] <= rank_tol * S[..., 0]
    if np.any(rank1):
        arc = shortest_arc(Vt[..., 0, :], U[..., :, 0], fallback_axis)
        R = np.where(rank1[..., None, None], arc, R)
    empty = ~(S[..., 0] > 0)
    if np.any(empty):
        R = np.where(empty[..., None, None], np.eye(3), R)
    return R
