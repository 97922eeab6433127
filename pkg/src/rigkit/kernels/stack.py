from __future__ import annotations

from dataclasses import dataclass

from .graph import mask_kind

FILM = "film"
TEMPORAL = "temporal_self_attention"
SPATIAL = "gl_gmha"
CROSS = "reference_cross_attention"
FFN = "feed_forward"

DEFAULT_LAYERS = 8
DEFAULT_CROSS_LAYERS = 6


@dataclass(frozen=True)
class LayerBlock:
    index: int
    sublayers: tuple
    mask: str

    @property
    def has_cross_attention(self):
        return CROSS in self.sublayers


def layer_stack_plan(layers=DEFAULT_LAYERS, cross_layers=DEFAULT_CROSS_LAYERS):
    """Rotation-decoder block layout: reference cross-attention only in the
    first ``cross_layers`` blocks, GL mask parity alternating from LOCAL."""
    if layers < 0 or not 0 <= cross_layers <= layers:
        raise ValueError(f"need 0 <= cross_layers ({cross_layers}) <= layers ({layers})")
    plan = []
    for i in range(layers):
        subs = [FILM, TEMPORAL, SPATIAL]
        if i < cross_layers:
            subs.append(CROSS)
        subs.append(FFN)
        plan.append(LayerBlock(i, tuple(subs), mask_kind(i)))
    return tuple(plan)
