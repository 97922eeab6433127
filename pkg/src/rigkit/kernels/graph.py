"""Tree relations between joints and the alternating local/global masks."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..skeleton import ROOT, require_valid

D_MAX = 8
LOCAL = "local"
GLOBAL = "global"


@dataclass(frozen=True, eq=False)
class GraphRelations:
    dist: np.ndarray  # (J, J) tree path length
    ancestor: np.ndarray  # ancestor[i, j]: j is a strict ancestor of i
    adjacency: np.ndarray

    @property
    def joint_count(self):
        return self.dist.shape[0]


@dataclass(frozen=True, eq=False)
class AttentionMask:
    allowed: np.ndarray  # (J, J) bool
    buckets: np.ndarray  # (J, J) int in [0, d_max]
    kind: str
    layer_index: int


def build_graph_relations(skeleton):
    require_valid(skeleton)
    J = skeleton.joint_count
    adj = np.zeros((J, J), dtype=bool)
    for j, p in enumerate(skeleton.parents):
        if p != ROOT:
            adj[j, p] = adj[p, j] = True
    neighbours = [np.flatnonzero(adj[j]) for j in range(J)]

    dist = np.zeros((J, J), dtype=np.int64)
    for s in range(J):
        seen = np.full(J, -1, dtype=np.int64)
        seen[s] = 0
        queue = deque([s])
        while queue:
            a = queue.popleft()
            for b in neighbours[a]:
                if seen[b] < 0:
                    seen[b] = seen[a] + 1
                    queue.append(b)
        dist[s] = seen

    anc = np.zeros((J, J), dtype=bool)
    for j in range(J):
        p = skeleton.parents[j]
        while p != ROOT:
            anc[j, p] = True
            p = skeleton.parents[p]
    return GraphRelations(dist, anc, adj)


def mask_kind(layer_index):
    return LOCAL if layer_index % 2 == 0 else GLOBAL


def build_gl_mask(relations, layer_index, joint_mask=None, d_max=D_MAX):
    """Even layers are LOCAL (joints sharing a kinematic chain, i.e. one is an
    ancestor of the other), odd layers GLOBAL (every unpadded pair). Padded
    joints are forbidden in both directions."""
    J = relations.joint_count
    valid = np.ones(J, dtype=bool) if joint_mask is None else np.asarray(joint_mask, dtype=bool)
    pair_valid = valid[:, None] & valid[None, :]
    kind = mask_kind(layer_index)
    if kind == LOCAL:
        chain = relations.ancestor | relations.ancestor.T | np.eye(J, dtype=bool)
        allowed = chain & pair_valid
    else:
        allowed = pair_valid.copy()
    buckets = np.minimum(relations.dist, d_max)
    return AttentionMask(allowed, buckets, kind, int(layer_index))


def dump_masks(relations, layers, joint_mask=None):
    """Plain-text 0/1 grids, one section per layer index."""
    sections = []
    for layer in range(layers):
        m = build_gl_mask(relations, layer, joint_mask)
        rows = [" ".join("1" if a else "0" for a in row) for row in m.allowed]
        sections.append("\n".join([f"layer {layer} {m.kind}"] + rows))
    return "\n\n".join(sections) + ("\n" if sections else "")


def parse_mask_dump(text):
    """Inverse of :func:`dump_masks`: list of ``(layer, kind, allowed)``."""
    out = []
    for block in text.strip().split("\n\n"):
        if not block.strip():
            continue
        lines = block.strip().splitlines()
        _, layer, kind = lines[0].split()
        grid = np.array([[c == "1" for c in line.split()] for line in lines[1:]], dtype=bool)
        out.append((int(layer), kind, grid))
    return out
