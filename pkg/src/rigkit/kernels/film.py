from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True, eq=False)
class FilmParams:
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        b = np.asarray(self.beta, dtype=np.float64)
        if g.shape != b.shape or g.ndim != 1:
            raise ShapeError(f"gamma {g.shape} and beta {b.shape} must be equal-length vectors")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
            raise ValueError("FiLM parameters must be finite")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", b)


def _check(x, params):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.gamma.shape[0]:
        raise ShapeError(f"feature width {x.shape[-1]} != FiLM width {params.gamma.shape[0]}")
    return x


def film_forward(x, params):
    """Feature-wise affine modulation ``gamma * x + beta`` over the last axis."""
    x = _check(x, params)
    return params.gamma * x + params.beta


def film_backward(x, params, upstream):
    """Returns ``(dx, FilmParams(dgamma, dbeta))``; parameter gradients are
    summed over any leading batch dims."""
    x = _check(x, params)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != x.shape:
        raise ShapeError(f"upstream gradient {g.shape} != input {x.shape}")
    d = x.shape[-1]
    dgamma = (g * x).reshape(-1, d).sum(axis=0)
    dbeta = g.reshape(-1, d).sum(axis=0)
    return params.gamma * g, FilmParams(dgamma, dbeta)
