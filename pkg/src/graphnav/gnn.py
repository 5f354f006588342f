"""Message-passing network over typed graphs.

Works on explicit arrays (node inputs, directed edge list, per-edge type
weights) so the same operator serves both the full memory graph and the
pooled proxy graph. Per round, each directed edge (i, j) produces a
message from the type networks weighted by the edge's type vector; node i
aggregates incoming messages and blends them into its state through a
gated update. Edge input embeddings are computed once and stay fixed
across rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graph import NavGraph


class GnnError(ValueError):
    pass


@dataclass
class GnnParams:
    node_in_w: T.Tensor       # (d_node + d_ctx, d)
    node_in_b: T.Tensor       # (1, d)
    edge_in_w: T.Tensor       # (d_edge + d_ctx, d)
    edge_in_b: T.Tensor
    msg_w: list[T.Tensor]     # per edge type: (3d, d)
    msg_b: list[T.Tensor]     # per edge type: (1, d)
    gate_w: T.Tensor          # (2d, d)
    gate_b: T.Tensor
    cand_w: T.Tensor          # (2d, d)
    cand_b: T.Tensor
    out_w: T.Tensor           # (d, d_out)
    rounds: int

    @property
    def dim(self) -> int:
        return self.out_w.data.shape[0]

    def named(self, prefix: str) -> dict[str, T.Tensor]:
        out = {}
        for k in ("node_in_w", "node_in_b", "edge_in_w", "edge_in_b",
                  "gate_w", "gate_b", "cand_w", "cand_b", "out_w"):
            out[f"{prefix}.{k}"] = getattr(self, k)
        for t, (w, b) in enumerate(zip(self.msg_w, self.msg_b)):
            out[f"{prefix}.msg{t}_w"] = w
            out[f"{prefix}.msg{t}_b"] = b
        return out


def _affine(x: T.Tensor, w: T.Tensor, b: T.Tensor) -> T.Tensor:
    return T.add(T.matmul(x, w), b)


def gnn_apply(node_inputs: T.Tensor, context: T.Tensor,
              edges: np.ndarray, edge_inputs: T.Tensor | None,
              conn: T.Tensor | None, params: GnnParams) -> T.Tensor:
    """Run the network; returns one output row per node.

    ``edges`` is an integer (m, 2) array of (receiver, neighbor) pairs;
    ``conn`` carries the per-edge weight of each edge type, differentiable
    when it comes from the pooled graph. An empty edge list degenerates to
    per-node gated self-updates.
    """
    n, d_node = node_inputs.data.shape
    if context.data.ndim != 2 or context.data.shape[0] != 1:
        raise GnnError(f"context must be a (1, d) row, got {context.data.shape}")
    d_ctx = context.data.shape[1]
    if params.node_in_w.data.shape[0] != d_node + d_ctx:
        raise GnnError(
            f"node input dim {d_node} + context dim {d_ctx} does not match "
            f"input network ({params.node_in_w.data.shape[0]} rows)")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    m = len(edges)
    if m and (edges[:, 0] == edges[:, 1]).any():
        raise GnnError("self-loop edges are not allowed")
    if m and (edges.min() < 0 or edges.max() >= n):
        raise GnnError(f"edge endpoint out of range for {n} nodes")

    d = params.dim
    ones_n = T.Tensor(np.ones((n, 1)))
    v = T.tanh(_affine(T.concat([node_inputs, T.matmul(ones_n, context)], axis=-1),
                       params.node_in_w, params.node_in_b))
    if m:
        if conn is None or edge_inputs is None:
            raise GnnError("edges given without edge inputs/type weights")
        if conn.data.shape != (m, len(params.msg_w)):
            raise GnnError(
                f"type weights {conn.data.shape} do not match {m} edges x "
                f"{len(params.msg_w)} edge types")
        ones_m = T.Tensor(np.ones((m, 1)))
        e1 = T.tanh(_affine(T.concat([edge_inputs, T.matmul(ones_m, context)], axis=-1),
                            params.edge_in_w, params.edge_in_b))
        recv = edges[:, 0]
        nbr = edges[:, 1]
        scatter = np.zeros((n, m))
        scatter[recv, np.arange(m)] = 1.0
        scatter_t = T.Tensor(scatter)
        selectors = [T.Tensor(np.eye(len(params.msg_w))[:, t:t + 1])
                     for t in range(len(params.msg_w))]

    for _ in range(params.rounds):
        if m:
            vi = T.embedding_lookup(v, recv)
            vj = T.embedding_lookup(v, nbr)
            pair = T.concat([vi, vj, e1], axis=-1)
            msg = None
            for t, (w, b) in enumerate(zip(params.msg_w, params.msg_b)):
                weighted = T.mul(T.matmul(conn, selectors[t]),
                                 T.tanh(_affine(pair, w, b)))
                msg = weighted if msg is None else T.add(msg, weighted)
            agg = T.matmul(scatter_t, msg)
        else:
            agg = T.Tensor(np.zeros((n, d)))
        both = T.concat([agg, v], axis=-1)
        z = T.sigmoid(_affine(both, params.gate_w, params.gate_b))
        cand = T.tanh(_affine(both, params.cand_w, params.cand_b))
        keep = T.add(T.Tensor(np.ones((1, 1))), T.mul(T.Tensor(np.full((1, 1), -1.0)), z))
        v = T.add(T.mul(z, v), T.mul(keep, cand))
    return T.matmul(v, params.out_w)


def navgraph_inputs(graph: NavGraph) -> tuple[T.Tensor, np.ndarray, T.Tensor | None, T.Tensor | None]:
    """Assemble (nodes, edges, edge inputs, type weights) from the memory."""
    nodes = T.concat([n.embedding for n in graph.nodes], axis=0)
    items = sorted((k, w) for k, w in graph.conn.items() if w.sum() > 0)
    if not items:
        return nodes, np.zeros((0, 2), dtype=np.int64), None, None
    edges = np.array([k for k, _ in items], dtype=np.int64)
    conn = T.Tensor(np.stack([w for _, w in items]))
    edge_inputs = T.concat([graph.edge_emb[k] for k, _ in items], axis=0)
    return nodes, edges, edge_inputs, conn
