"""Graph-attention masks and hand-derived forward/backward kernels."""
from .attention import (
    AttentionCache,
    GmhaParams,
    gmha_backward,
    gmha_forward,
    reference_cross_attention,
    reference_cross_attention_backward,
    rope,
    rope_windowed_temporal_attention,
    rope_windowed_temporal_attention_backward,
    temporal_window_mask,
)
from .embedding import frequency_positional_embedding
from .film import FilmParams, film_backward, film_forward
from .graph import (
    D_MAX,
    AttentionMask,
    GraphRelations,
    build_gl_mask,
    build_graph_relations,
    dump_masks,
    parse_mask_dump,
)
from .stack import LayerBlock, layer_stack_plan
