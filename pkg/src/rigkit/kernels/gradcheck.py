"""Central finite-difference verification of the analytic backward passes."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .._parallel import parallel_map
from ..skeleton import ROOT, Skeleton
from ..synthetic import stream
from .attention import (
    GmhaParams,
    gmha_backward,
    gmha_forward,
    reference_cross_attention,
    reference_cross_attention_backward,
    rope_windowed_temporal_attention,
    rope_windowed_temporal_attention_backward,
)
from .film import FilmParams, film_backward, film_forward
from .graph import build_gl_mask, build_graph_relations

FD_STEP = 1e-5
# Relative error is |a - n| / max(|a|, |n|, REL_FLOOR): entries whose true
# gradient is below the floor are compared absolutely against it.
REL_FLOOR = 1e-6
TOLERANCES = {"gmha": 1e-4, "film": 1e-6, "rope": 1e-4, "cross": 1e-4}


def numeric_gradient(fn, arr, step=FD_STEP):
    """Central differences of scalar ``fn()`` w.r.t. every entry of ``arr``
    (perturbed in place and restored)."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        up = fn()
        arr[i] = old - step
        down = fn()
        arr[i] = old
        grad[i] = (up - down) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor=REL_FLOOR):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _params_errors(loss, params, grads, step):
    """Compare parameter gradients; ``params`` arrays are perturbed in place."""
    worst = 0.0
    for name, arr in params.arrays().items():
        num = numeric_gradient(loss, arr, step)
        worst = max(worst, relative_error(getattr(grads, name), num))
    return worst


def _mutable_params(p):
    return replace(p, **{k: v.copy() for k, v in p.arrays().items()})


def _random_tree(rng, J):
    parents = [ROOT] + [int(rng.integers(0, i)) for i in range(1, J)]
    return Skeleton(parents, rng.standard_normal((J, 3)))


def check_gmha(seed, step=FD_STEP):
    rng = stream(seed, "gradcheck-gmha")
    J = int(rng.integers(2, 5))
    heads = int(rng.choice([1, 2]))
    d = heads * int(rng.integers(1, 9 // heads))
    T = int(rng.integers(1, 3))
    rel = build_graph_relations(_random_tree(rng, J))
    joint_mask = np.ones(J, dtype=bool)
    if J > 2 and rng.random() < 0.3:
        joint_mask[int(rng.integers(1, J))] = False
    mask = build_gl_mask(rel, seed % 2, joint_mask)
    params = _mutable_params(GmhaParams.random(rng, d, heads, scale=0.8))
    x = rng.standard_normal((T, J, d))
    g = rng.standard_normal((T, J, d))

    def loss():
        return float(np.sum(gmha_forward(x, params, mask)[0] * g))

    _, cache = gmha_forward(x, params, mask)
    dx, grads = gmha_backward(cache, g)
    return max(relative_error(dx, numeric_gradient(loss, x, step)), _params_errors(loss, params, grads, step))


def check_film(seed, step=FD_STEP):
    rng = stream(seed, "gradcheck-film")
    d = int(rng.integers(1, 9))
    params = FilmParams(rng.standard_normal(d), rng.standard_normal(d))
    x = rng.standard_normal((int(rng.integers(1, 4)), d))
    g = rng.standard_normal(x.shape)

    def loss():
        return float(np.sum(film_forward(x, params) * g))

    dx, grads = film_backward(x, params, g)
    worst = relative_error(dx, numeric_gradient(loss, x, step))
    worst = max(worst, relative_error(grads.gamma, numeric_gradient(loss, params.gamma, step)))
    return max(worst, relative_error(grads.beta, numeric_gradient(loss, params.beta, step)))


def check_rope(seed, step=FD_STEP):
    rng = stream(seed, "gradcheck-rope")
    heads = int(rng.choice([1, 2]))
    d = heads * 2 * int(rng.integers(1, 3))
    T = int(rng.integers(2, 8))
    window = int(rng.choice([1, 3, 5]))
    params = _mutable_params(GmhaParams.random(rng, d, heads, scale=0.8))
    x = rng.standard_normal((2, T, d))
    g = rng.standard_normal(x.shape)
    base = float(rng.choice([10.0, 10000.0]))

    def loss():
        return float(np.sum(rope_windowed_temporal_attention(x, params, window, base)[0] * g))

    _, cache = rope_windowed_temporal_attention(x, params, window, base)
    dx, grads = rope_windowed_temporal_attention_backward(cache, g)
    worst = relative_error(dx, numeric_gradient(loss, x, step))
    for name in ("w_q", "w_k", "w_v", "w_o"):
        worst = max(worst, relative_error(getattr(grads, name), numeric_gradient(loss, getattr(params, name), step)))
    return worst


def check_cross(seed, step=FD_STEP):
    rng = stream(seed, "gradcheck-cross")
    J = int(rng.integers(1, 4))
    heads = int(rng.choice([1, 2]))
    d = heads * int(rng.integers(1, 6 // heads + 1))
    per_joint = bool(seed % 2)
    params = _mutable_params(GmhaParams.random(rng, d, heads, scale=0.8))
    q = rng.standard_normal((J, d))
    r = rng.standard_normal((J, d))
    g = rng.standard_normal((J, d))

    def loss():
        return float(np.sum(reference_cross_attention(q, r, params, per_joint)[0] * g))

    _, cache = reference_cross_attention(q, r, params, per_joint)
    dq, dr, grads = reference_cross_attention_backward(cache, g)
    worst = max(relative_error(dq, numeric_gradient(loss, q, step)), relative_error(dr, numeric_gradient(loss, r, step)))
    for name in ("w_q", "w_k", "w_v", "w_o"):
        worst = max(worst, relative_error(getattr(grads, name), numeric_gradient(loss, getattr(params, name), step)))
    return worst


KERNELS = {"gmha": check_gmha, "film": check_film, "rope": check_rope, "cross": check_cross}


@dataclass(frozen=True)
class GradcheckResult:
    kernel: str
    seeds: int
    errors: tuple
    tolerance: float

    @property
    def max_error(self):
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self):
        return self.max_error < self.tolerance


def run_gradcheck(kernel, seeds=50, threads=None):
    if kernel not in KERNELS:
        raise KeyError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}")
    errors = parallel_map(KERNELS[kernel], range(seeds), threads)
    return GradcheckResult(kernel, seeds, tuple(errors), TOLERANCES[kernel])
