from __future__ import annotations

import numpy as np

DEFAULT_BANDS = 6


def frequency_positional_embedding(p, bands=DEFAULT_BANDS):
    """Sinusoidal encoding of 3D points at octave frequencies.

    For each coordinate ``c`` and band ``k`` the pair
    ``(sin(2**k * pi * c), cos(2**k * pi * c))`` is emitted, coordinate-major,
    giving ``6 * bands`` features per point. Leading batch dims are kept.
    """
    if bands < 1:
        raise ValueError("bands must be >= 1")
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 3:
        raise ValueError(f"points must have 3 coordinates, got shape {p.shape}")
    arg = p[..., :, None] * (np.pi * 2.0 ** np.arange(bands))  # (..., 3, bands)
    out = np.stack([np.sin(arg), np.cos(arg)], axis=-1)  # (..., 3, bands, 2)
    return out.reshape(p.shape[:-1] + (6 * bands,))
