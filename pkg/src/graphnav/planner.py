"""Planning core: pooled proxy-graph reasoning over the memory graph.

Each decision step the full memory graph is softly assigned to a small
fixed-size proxy graph (attention-style row-stochastic pooling), a
message-passing network refines the proxy, and the result is projected
back onto every memory node. Multiple channels run the whole pipeline
with independent parameters and sum their outputs. A dot-product head
turns refined node vectors into a distribution over the action set:
frontier leaves, other visited nodes (backtrack jumps), and stopping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .gnn import GnnParams, gnn_apply, navgraph_inputs
from .graph import N_EDGE_TYPES, NavGraph


class PlannerError(ValueError):
    pass


@dataclass
class PlannerConfig:
    proxy_size: int = 8
    pool_dim: int = 32        # d_L
    pool_rounds: int = 2      # K_L
    plan_dim: int = 256       # d_P
    plan_rounds: int = 3      # K_P
    n_channels: int = 3
    top_k: int = 16
    sum_before_unpool: bool = False

    def __post_init__(self):
        for name in ("proxy_size", "pool_dim", "pool_rounds", "plan_dim",
                     "n_channels", "top_k"):
            if getattr(self, name) < 1:
                raise PlannerError(f"{name} must be >= 1")
        if self.plan_rounds < 0 or self.pool_rounds < 0:
            raise PlannerError("round counts cannot be negative")


@dataclass
class ChannelParams:
    pool_gnn: GnnParams       # output dim = proxy size
    plan_gnn: GnnParams       # output dim = node embedding dim

    def named(self, prefix: str) -> dict[str, T.Tensor]:
        out = self.pool_gnn.named(f"{prefix}.pool")
        out.update(self.plan_gnn.named(f"{prefix}.plan"))
        return out


@dataclass
class ProxyGraph:
    v_bar: T.Tensor           # (|V'|, d)
    e_bar: T.Tensor           # (|V'|, |V'|, d)
    m_bar: T.Tensor           # (|V'|, |V'|, |F|)
    size: int


def _context(h_t: T.Tensor, c_summary: T.Tensor) -> T.Tensor:
    return T.concat([h_t, c_summary], axis=-1)


def _pooled_pair_products(assign: T.Tensor, edges: np.ndarray,
                          per_edge: T.Tensor, p: int) -> T.Tensor:
    """Sum over edges of A[i,u]·A[j,v]·x_e, flattened over (u, v).

    Returns (p*p, dim): the dense Aᵀ X A for a sparse X whose only nonzero
    blocks sit on the edge list.
    """
    a_src = T.embedding_lookup(assign, edges[:, 0])       # (m, p)
    a_dst = T.embedding_lookup(assign, edges[:, 1])       # (m, p)
    m = len(edges)
    outer = T.mul(T.reshape(a_src, (m, p, 1)), T.reshape(a_dst, (m, 1, p)))
    flat = T.reshape(outer, (m, p * p))                   # (m, p²)
    return T.matmul(T.transpose(flat), per_edge)          # (p², dim)


def pool(graph: NavGraph, h_t: T.Tensor, c_summary: T.Tensor,
         params: ChannelParams, cfg: PlannerConfig,
         assignment_override: T.Tensor | None = None
         ) -> tuple[ProxyGraph, T.Tensor]:
    """Soft-assign the memory graph onto the proxy graph.

    Returns the pooled proxy and the row-stochastic assignment matrix.
    ``assignment_override`` replaces the learned assignment (tests use the
    identity to make pooling transparent).
    """
    if graph.n_nodes == 0:
        raise PlannerError("cannot pool an empty graph")
    nodes, edges, edge_inputs, conn = navgraph_inputs(graph)
    ctx = _context(h_t, c_summary)
    p = cfg.proxy_size
    if assignment_override is not None:
        assign = assignment_override
        if assign.data.shape != (graph.n_nodes, p):
            raise PlannerError(
                f"assignment override {assign.data.shape} does not fit "
                f"{graph.n_nodes} nodes x proxy {p}")
    else:
        scores = gnn_apply(nodes, ctx, edges, edge_inputs, conn, params.pool_gnn)
        if scores.data.shape[1] != p:
            raise PlannerError(
                f"pooling network emits {scores.data.shape[1]} columns, "
                f"proxy size is {p}")
        assign = T.softmax(scores)
    v_bar = T.matmul(T.transpose(assign), nodes)
    d = nodes.data.shape[1]
    if len(edges):
        e_bar = T.reshape(_pooled_pair_products(assign, edges, edge_inputs, p),
                          (p, p, d))
        m_bar = T.reshape(_pooled_pair_products(assign, edges, conn, p),
                          (p, p, N_EDGE_TYPES))
    else:
        e_bar = T.Tensor(np.zeros((p, p, d)))
        m_bar = T.Tensor(np.zeros((p, p, N_EDGE_TYPES)))
    return ProxyGraph(v_bar=v_bar, e_bar=e_bar, m_bar=m_bar, size=p), assign


def plan_and_unpool(proxy: ProxyGraph, assign: T.Tensor, h_t: T.Tensor,
                    c_summary: T.Tensor, params: ChannelParams,
                    unpool: bool = True) -> T.Tensor:
    """Refine the proxy with the planning network and map back to nodes."""
    p = proxy.size
    if assign.data.shape[1] != p:
        raise PlannerError(
            f"assignment has {assign.data.shape[1]} proxy columns, expected {p}")
    off_diag = np.array([u * p + v for u in range(p) for v in range(p) if u != v],
                        dtype=np.int64)
    edges = np.array([(u, v) for u in range(p) for v in range(p) if u != v],
                     dtype=np.int64)
    d = proxy.v_bar.data.shape[1]
    e_rows = T.embedding_lookup(T.reshape(proxy.e_bar, (p * p, d)), off_diag)
    m_rows = T.embedding_lookup(T.reshape(proxy.m_bar, (p * p, N_EDGE_TYPES)),
                                off_diag)
    ctx = _context(h_t, c_summary)
    refined = gnn_apply(proxy.v_bar, ctx, edges, e_rows, m_rows, params.plan_gnn)
    return T.matmul(assign, refined) if unpool else refined


def multi_channel_plan(graph: NavGraph, h_t: T.Tensor, c_summary: T.Tensor,
                       channels: list[ChannelParams], cfg: PlannerConfig,
                       assignment_override: T.Tensor | None = None,
                       collect_assignments: list | None = None) -> T.Tensor:
    """Independent pool/plan/unpool per channel, summed over channels."""
    if len(channels) != cfg.n_channels:
        raise PlannerError(
            f"{len(channels)} channel params for n_channels={cfg.n_channels}")
    total = None
    first_assign = None
    for ch in channels:
        proxy, assign = pool(graph, h_t, c_summary, ch, cfg, assignment_override)
        if collect_assignments is not None:
            collect_assignments.append((assign, proxy))
        if first_assign is None:
            first_assign = assign
        out = plan_and_unpool(proxy, assign, h_t, c_summary, ch,
                              unpool=not cfg.sum_before_unpool)
        total = out if total is None else T.add(total, out)
    if cfg.sum_before_unpool:
        total = T.matmul(first_assign, total)
    return total


@dataclass
class PolicyResult:
    probs: T.Tensor           # (1, k)
    logits: T.Tensor          # (1, k)
    candidates: list[int]     # graph node ids (or local action ids)


def policy(h_t: T.Tensor, refined: T.Tensor, graph: NavGraph,
           w_hv: T.Tensor) -> PolicyResult:
    """Distribution over the action set; last entry is always stop.

    Candidate order comes from the graph: leaves, other internals, then
    the current node (= stop).
    """
    if refined.data.shape[0] != graph.n_nodes:
        raise PlannerError(
            f"refined matrix has {refined.data.shape[0]} rows for "
            f"{graph.n_nodes} graph nodes")
    cands = graph.candidates()
    if not cands:
        raise PlannerError("empty action set")
    query = T.matmul(h_t, w_hv)                             # (1, d)
    chosen = T.embedding_lookup(refined, np.asarray(cands))  # (k, d)
    logits = T.matmul(query, T.transpose(chosen))            # (1, k)
    return PolicyResult(probs=T.softmax(logits), logits=logits,
                        candidates=cands)


def baseline_policy(h_t: T.Tensor, c_summary: T.Tensor,
                    action_embeddings: T.Tensor, gnn_p: GnnParams,
                    w_hv: T.Tensor) -> PolicyResult:
    """Local-action head: same per-node map and scoring, no graph memory."""
    zero_rounds = GnnParams(
        node_in_w=gnn_p.node_in_w, node_in_b=gnn_p.node_in_b,
        edge_in_w=gnn_p.edge_in_w, edge_in_b=gnn_p.edge_in_b,
        msg_w=gnn_p.msg_w, msg_b=gnn_p.msg_b,
        gate_w=gnn_p.gate_w, gate_b=gnn_p.gate_b,
        cand_w=gnn_p.cand_w, cand_b=gnn_p.cand_b,
        out_w=gnn_p.out_w, rounds=0)
    ctx = _context(h_t, c_summary)
    mapped = gnn_apply(action_embeddings, ctx, np.zeros((0, 2)), None, None,
                       zero_rounds)
    logits = T.matmul(T.matmul(ctx, w_hv), T.transpose(mapped))
    return PolicyResult(probs=T.softmax(logits), logits=logits,
                        candidates=list(range(logits.data.shape[1])))


def check_step_invariants(assign: T.Tensor, proxy: ProxyGraph,
                          tol: float = 1e-6) -> None:
    """Online sanity checks on pooling outputs; raises on violation."""
    a = assign.data
    if (a < -tol).any():
        raise PlannerError(f"negative assignment entry: {a.min():.3e}")
    rows = a.sum(axis=1)
    if np.abs(rows - 1.0).max() > tol:
        raise PlannerError(
            f"assignment rows deviate from 1 by {np.abs(rows - 1.0).max():.3e}")
    if (proxy.m_bar.data < -tol).any():
        raise PlannerError(
            f"pooled connectivity went negative: {proxy.m_bar.data.min():.3e}")
