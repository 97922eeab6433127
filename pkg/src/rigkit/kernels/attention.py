"""Multi-head attention kernels with exact backward passes.

All kernels share one core: project to heads, optional rotary embedding of
queries and keys, scaled dot-product logits plus an optional additive bias,
masked softmax, output projection, residual. Row-vector convention
throughout (``x @ W``). Rows with no allowed key contribute nothing and
return the residual input unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ShapeError
from .graph import D_MAX

ROPE_BASE = 10000.0
WINDOW = 5


@dataclass(frozen=True, eq=False)
class GmhaParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    heads: int = 1
    dist_bias: np.ndarray = None  # (heads, D_MAX + 1)

    def __post_init__(self):
        d = np.shape(self.w_q)[0]
        for f in ("w_q", "w_k", "w_v", "w_o"):
            w = np.asarray(getattr(self, f), dtype=np.float64)
            if w.shape != (d, d):
                raise ShapeError(f"{f} must be ({d}, {d}), got {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{f} is not finite")
            object.__setattr__(self, f, w)
        if self.heads < 1 or d % self.heads:
            raise ShapeError(f"width {d} is not divisible by {self.heads} heads")
        bias = np.zeros((self.heads, D_MAX + 1)) if self.dist_bias is None else self.dist_bias
        bias = np.asarray(bias, dtype=np.float64)
        if bias.ndim != 2 or bias.shape[0] != self.heads:
            raise ShapeError(f"dist_bias must be ({self.heads}, n_buckets), got {bias.shape}")
        object.__setattr__(self, "dist_bias", bias)

    @property
    def width(self):
        return self.w_q.shape[0]

    @property
    def head_dim(self):
        return self.width // self.heads

    @classmethod
    def random(cls, rng, width, heads=1, scale=None, bias_scale=0.5):
        scale = 1.0 / np.sqrt(width) if scale is None else scale
        w = [rng.standard_normal((width, width)) * scale for _ in range(4)]
        return cls(*w, heads=heads, dist_bias=rng.standard_normal((heads, D_MAX + 1)) * bias_scale)

    @classmethod
    def zeros(cls, width, heads=1):
        z = np.zeros((width, width))
        return cls(z, z, z, z, heads=heads)

    def arrays(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "heads"}


@dataclass(eq=False)
class AttentionCache:
    xq: np.ndarray
    xkv: np.ndarray
    params: GmhaParams
    q: np.ndarray  # (..., H, Nq, dh), rotated when rope is used
    k: np.ndarray
    v: np.ndarray
    attn: np.ndarray  # (..., H, Nq, Nk)
    merged: np.ndarray  # (..., Nq, d) head outputs before w_o
    pos_q: np.ndarray | None
    pos_k: np.ndarray | None
    rope_base: float
    self_attention: bool
    extra: dict


def _split(x, H):
    *lead, n, d = x.shape
    return np.swapaxes(x.reshape(*lead, n, H, d // H), -3, -2)


def _merge(x):
    *lead, H, n, dh = x.shape
    return np.swapaxes(x, -3, -2).reshape(*lead, n, H * dh)


def rope(x, positions, base=ROPE_BASE):
    """Rotate consecutive feature pairs of ``x`` (..., N, dh) by
    ``position * base**(-2i/dh)``."""
    x = np.asarray(x, dtype=np.float64)
    dh = x.shape[-1]
    if dh % 2:
        raise ShapeError(f"rotary embedding needs an even width, got {dh}")
    pos = np.asarray(positions, dtype=np.float64)
    freqs = base ** (-2.0 * np.arange(dh // 2) / dh)
    ang = pos[:, None] * freqs  # (N, dh/2)
    c, s = np.cos(ang), np.sin(ang)
    x0, x1 = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = x0 * c - x1 * s
    out[..., 1::2] = x0 * s + x1 * c
    return out


def _check_input(x, d, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[-1] != d:
        raise ShapeError(f"{name} must be (..., N, {d}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _attention_forward(xq, xkv, params, allowed, logit_bias=None, pos_q=None, pos_k=None,
                       rope_base=ROPE_BASE, self_attention=False):
    H, dh = params.heads, params.head_dim
    q = _split(xq @ params.w_q, H)
    k = _split(xkv @ params.w_k, H)
    v = _split(xkv @ params.w_v, H)
    if pos_q is not None:
        q = rope(q, pos_q, rope_base)
        k = rope(k, pos_k, rope_base)
    logits = q @ np.swapaxes(k, -1, -2) / np.sqrt(dh)
    if logit_bias is not None:
        logits = logits + logit_bias
    allowed = np.broadcast_to(allowed[..., None, :, :], logits.shape)
    logits = np.where(allowed, logits, -np.inf)
    row_max = logits.max(axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.where(allowed, np.exp(logits - row_max), 0.0)
    denom = e.sum(axis=-1, keepdims=True)
    attn = e / np.where(denom > 0, denom, 1.0)
    merged = _merge(attn @ v)
    out = xq + merged @ params.w_o
    cache = AttentionCache(xq, xkv, params, q, k, v, attn, merged, pos_q, pos_k, rope_base, self_attention, {})
    return out, cache


def _sum_lead(a, nd):
    """Sum ``a`` over all leading axes beyond its last ``nd``."""
    return a.reshape((-1,) + a.shape[-nd:]).sum(axis=0)


def _attention_backward(cache, upstream):
    p = cache.params
    H, dh = p.heads, p.head_dim
    g = np.asarray(upstream, dtype=np.float64)

    dxq = g.copy()
    dw_o = _sum_lead(np.swapaxes(cache.merged, -1, -2) @ g, 2)
    d_heads = _split(g @ p.w_o.T, H)
    dattn = d_heads @ np.swapaxes(cache.v, -1, -2)
    dv = np.swapaxes(cache.attn, -1, -2) @ d_heads
    dlogits = cache.attn * (dattn - np.sum(dattn * cache.attn, axis=-1, keepdims=True))
    dq = dlogits @ cache.k / np.sqrt(dh)
    dk = np.swapaxes(dlogits, -1, -2) @ cache.q / np.sqrt(dh)
    if cache.pos_q is not None:
        # rotation is orthogonal: its adjoint is the rotation by -position
        dq = rope(dq, -cache.pos_q, cache.rope_base)
        dk = rope(dk, -cache.pos_k, cache.rope_base)
    dq, dk, dv = _merge(dq), _merge(dk), _merge(dv)

    xq, xkv = cache.xq, cache.xkv
    dw_q = _sum_lead(np.swapaxes(xq, -1, -2) @ dq, 2)
    dw_k = _sum_lead(np.swapaxes(xkv, -1, -2) @ dk, 2)
    dw_v = _sum_lead(np.swapaxes(xkv, -1, -2) @ dv, 2)
    dxq = dxq + dq @ p.w_q.T
    dxkv = dk @ p.w_k.T + dv @ p.w_v.T
    return dxq, dxkv, (dw_q, dw_k, dw_v, dw_o), dlogits


# --------------------------------------------------------------------------
# graph-biased spatial attention


def gmha_forward(x, params, mask):
    """Graph-guided self-attention over joints for every frame.

    ``x`` is ``(T, J, d)`` (any leading dims). Logits get a per-head learned
    bias indexed by the clamped tree distance of each pair; pairs the mask
    forbids are excluded from the softmax.
    """
    x = _check_input(x, params.width, "x")
    J = x.shape[-2]
    if mask.allowed.shape != (J, J):
        raise ShapeError(f"mask is {mask.allowed.shape}, features have {J} joints")
    if mask.buckets.max(initial=0) >= params.dist_bias.shape[1]:
        raise ShapeError("distance bucket exceeds the bias table")
    bias = params.dist_bias[:, mask.buckets]  # (H, J, J)
    out, cache = _attention_forward(x, x, params, mask.allowed, bias, self_attention=True)
    cache.extra["buckets"] = mask.buckets
    return out, cache


def gmha_backward(cache, upstream):
    """Returns ``(dx, GmhaParams of gradients)``."""
    if "buckets" not in cache.extra:
        raise ValueError("cache does not come from gmha_forward")
    if np.shape(upstream) != cache.xq.shape:
        raise ShapeError(f"upstream gradient {np.shape(upstream)} != output {cache.xq.shape}")
    dxq, dxkv, (dw_q, dw_k, dw_v, dw_o), dlogits = _attention_backward(cache, upstream)
    p = cache.params
    dl = _sum_lead(dlogits, 3)  # (H, J, J)
    buckets = cache.extra["buckets"].ravel()
    nb = p.dist_bias.shape[1]
    dbias = np.stack([np.bincount(buckets, weights=dl[h].ravel(), minlength=nb) for h in range(p.heads)])
    return dxq + dxkv, GmhaParams(dw_q, dw_k, dw_v, dw_o, heads=p.heads, dist_bias=dbias)


# --------------------------------------------------------------------------
# windowed temporal attention with rotary positions


def temporal_window_mask(frames, window):
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    half = (window - 1) // 2
    idx = np.arange(frames)
    return np.abs(idx[:, None] - idx[None, :]) <= half


def rope_windowed_temporal_attention(x, params, window=WINDOW, rope_base=ROPE_BASE):
    """Per-joint self-attention across frames inside a sliding symmetric
    window, with rotary position embedding on queries and keys.

    ``x`` is ``(..., T, d)``; put the joint axis in the leading dims to run
    every joint's sequence independently. The distance-bias table of
    ``params`` is unused.
    """
    if params.width % 2:
        raise ShapeError(f"feature width must be even, got {params.width}")
    if params.head_dim % 2:
        raise ShapeError(f"head width must be even, got {params.head_dim}")
    x = _check_input(x, params.width, "x")
    T = x.shape[-2]
    allowed = temporal_window_mask(T, window)
    pos = np.arange(T, dtype=np.float64)
    out, cache = _attention_forward(x, x, params, allowed, None, pos, pos, rope_base, self_attention=True)
    cache.extra["temporal"] = True
    return out, cache


def rope_windowed_temporal_attention_backward(cache, upstream):
    if "temporal" not in cache.extra:
        raise ValueError("cache does not come from rope_windowed_temporal_attention")
    if np.shape(upstream) != cache.xq.shape:
        raise ShapeError(f"upstream gradient {np.shape(upstream)} != output {cache.xq.shape}")
    dxq, dxkv, (dw_q, dw_k, dw_v, dw_o), _ = _attention_backward(cache, upstream)
    p = cache.params
    return dxq + dxkv, GmhaParams(dw_q, dw_k, dw_v, dw_o, heads=p.heads, dist_bias=np.zeros_like(p.dist_bias))


# --------------------------------------------------------------------------
# reference cross-attention


def reference_cross_attention(queries, reference_features, params, per_joint=True):
    """Joint queries ``(..., J, d)`` attend to reference features ``(..., J, d)``.

    With ``per_joint`` each joint sees only its own reference feature, so the
    softmax is a single 1 and the layer retrieves that joint's projected
    value; otherwise every reference joint is visible.
    """
    q = _check_input(queries, params.width, "queries")
    r = _check_input(reference_features, params.width, "reference_features")
    if q.shape != r.shape:
        raise ShapeError(f"queries {q.shape} and reference features {r.shape} differ")
    J = q.shape[-2]
    allowed = np.eye(J, dtype=bool) if per_joint else np.ones((J, J), dtype=bool)
    out, cache = _attention_forward(q, r, params, allowed)
    cache.extra["cross"] = per_joint
    return out, cache


def reference_cross_attention_backward(cache, upstream):
    """Returns ``(d_queries, d_reference_features, GmhaParams of gradients)``."""
    if "cross" not in cache.extra:
        raise ValueError("cache does not come from reference_cross_attention")
    if np.shape(upstream) != cache.xq.shape:
        raise ShapeError(f"upstream gradient {np.shape(upstream)} != output {cache.xq.shape}")
    dxq, dxkv, (dw_q, dw_k, dw_v, dw_o), _ = _attention_backward(cache, upstream)
    p = cache.params
    return dxq, dxkv, GmhaParams(dw_q, dw_k, dw_v, dw_o, heads=p.heads, dist_bias=np.zeros_like(p.dist_bias))
