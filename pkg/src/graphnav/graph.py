"""Evolving topological memory built online during navigation.

Internal nodes are visited locations; leaf nodes are known-but-unvisited
targets reachable by one action from some internal node. A typed
connectivity tensor distinguishes forward traversal (earlier visit to
later), its reverse, and internal-to-leaf frontier links. Node and edge
embeddings are differentiable tensors produced by small input networks,
so planner gradients reach them.

Also home to the route planner over the memory (multi-step "jump"
actions) and the route-fidelity supervision oracle used for training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .metrics import cls_score, ndtw
from .world import Observation, WorldGraph

# connectivity function types
FWD = 0      # earlier-visited internal -> later-visited internal
BWD = 1      # reverse of FWD
TO_LEAF = 2  # internal parent -> frontier leaf
N_EDGE_TYPES = 3

INTERNAL = "internal"
LEAF = "leaf"


class GraphProtocolError(RuntimeError):
    """The caller broke the expand/visit protocol."""


@dataclass
class GraphParams:
    """Input networks: observation -> node/edge embeddings (affine + tanh)."""
    loc_w: T.Tensor   # (d_obs, d)
    loc_b: T.Tensor   # (1, d)
    act_w: T.Tensor
    act_b: T.Tensor
    edge_w: T.Tensor
    edge_b: T.Tensor

    def named(self, prefix: str = "graph") -> dict[str, T.Tensor]:
        return {f"{prefix}.{k}": getattr(self, k) for k in
                ("loc_w", "loc_b", "act_w", "act_b", "edge_w", "edge_b")}


def _affine_tanh(x: np.ndarray, w: T.Tensor, b: T.Tensor) -> T.Tensor:
    row = T.Tensor(np.asarray(x, dtype=np.float64).reshape(1, -1))
    return T.tanh(T.add(T.matmul(row, w), b))


@dataclass
class NodeRecord:
    node_id: int
    role: str                 # INTERNAL | LEAF
    env_node: int
    embedding: T.Tensor       # (1, d)
    parent: int | None = None     # leaf: owning internal node
    action: int | None = None     # leaf: action slot at the parent


@dataclass
class NavGraph:
    nodes: list[NodeRecord] = field(default_factory=list)
    conn: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    edge_emb: dict[tuple[int, int], T.Tensor] = field(default_factory=dict)
    env_to_internal: dict[int, int] = field(default_factory=dict)
    env_to_leaf: dict[int, int] = field(default_factory=dict)
    obs_cache: dict[int, dict[int, np.ndarray]] = field(default_factory=dict)
    current: int = -1          # graph id of the agent's internal node
    new_leaves: list[int] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def internal_ids(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.role == INTERNAL]

    def leaf_ids(self) -> list[int]:
        return [n.node_id for n in self.nodes if n.role == LEAF]

    def candidates(self) -> list[int]:
        """Policy action space: leaves, other internals, then self (= stop)."""
        others = [i for i in self.internal_ids() if i != self.current]
        return self.leaf_ids() + others + [self.current]

    def connectivity(self) -> np.ndarray:
        m = np.zeros((self.n_nodes, self.n_nodes, N_EDGE_TYPES))
        for (i, j), w in self.conn.items():
            m[i, j] = w
        return m

    def _set_conn(self, i: int, j: int, kind: int) -> None:
        w = self.conn.setdefault((i, j), np.zeros(N_EDGE_TYPES))
        w[kind] = 1.0

    def _link_internals(self, earlier: int, later: int, params: GraphParams) -> None:
        """Typed bidirectional link between two visited nodes."""
        self._set_conn(earlier, later, FWD)
        self._set_conn(later, earlier, BWD)
        e_env = self.nodes[earlier].env_node
        l_env = self.nodes[later].env_node
        if (earlier, later) not in self.edge_emb:
            self.edge_emb[(earlier, later)] = _affine_tanh(
                self.obs_cache[e_env][l_env], params.edge_w, params.edge_b)
        if (later, earlier) not in self.edge_emb:
            self.edge_emb[(later, earlier)] = _affine_tanh(
                self.obs_cache[l_env][e_env], params.edge_w, params.edge_b)

    def internal_neighbors(self, i: int) -> list[int]:
        out = set()
        for (a, b), w in self.conn.items():
            if a == i and (w[FWD] > 0 or w[BWD] > 0):
                out.add(b)
        return sorted(out)


def expand(graph: NavGraph, env_node: int, obs: Observation,
           params: GraphParams) -> None:
    """Register arrival at ``env_node``, growing the memory.

    First call creates the root internal node. Arriving on a frontier leaf
    promotes it: the leaf becomes internal, gets a location embedding, and
    fresh leaves appear for its unexplored actions. Known neighbors are
    linked rather than duplicated. Arriving on an already-internal node
    only moves the cursor.
    """
    graph.obs_cache[env_node] = {
        t: f for t, f in zip(obs.neighbor_ids, obs.action_features)}
    if env_node in graph.env_to_internal:
        graph.current = graph.env_to_internal[env_node]
        graph.new_leaves = []
        return
    if graph.nodes and env_node not in graph.env_to_leaf:
        raise GraphProtocolError(
            f"arrived at env node {env_node} which is neither a frontier "
            f"leaf nor a visited location")

    if not graph.nodes:
        me = NodeRecord(0, INTERNAL, env_node,
                        _affine_tanh(obs.location_feature, params.loc_w, params.loc_b))
        graph.nodes.append(me)
    else:
        me = graph.nodes[graph.env_to_leaf.pop(env_node)]
        me.role = INTERNAL
        me.embedding = _affine_tanh(obs.location_feature, params.loc_w, params.loc_b)
        # frontier link becomes a traversal link
        old = graph.conn.get((me.parent, me.node_id))
        if old is not None:
            old[TO_LEAF] = 0.0
        graph._link_internals(me.parent, me.node_id, params)
        me.parent, me.action = None, None
    graph.env_to_internal[env_node] = me.node_id
    graph.current = me.node_id

    new_leaves = []
    for k, target in enumerate(obs.neighbor_ids):
        if target in graph.env_to_internal:
            j = graph.env_to_internal[target]
            if j != me.node_id and (me.node_id, j) not in graph.conn:
                if target in graph.obs_cache and env_node in graph.obs_cache[target]:
                    graph._link_internals(j, me.node_id, params)
            continue
        if target in graph.env_to_leaf:
            continue  # another internal already fronts this location
        leaf = NodeRecord(graph.n_nodes, LEAF, target,
                          _affine_tanh(obs.action_features[k],
                                       params.act_w, params.act_b),
                          parent=me.node_id, action=k)
        graph.nodes.append(leaf)
        graph.env_to_leaf[target] = leaf.node_id
        graph._set_conn(me.node_id, leaf.node_id, TO_LEAF)
        graph.edge_emb[(me.node_id, leaf.node_id)] = _affine_tanh(
            obs.action_features[k], params.edge_w, params.edge_b)
        new_leaves.append(leaf.node_id)
    graph.new_leaves = new_leaves


def prune_topk(graph: NavGraph, probs: dict[int, float], K: int) -> None:
    """Keep only the K most probable of this step's new leaves.

    Ties go to the lower node id. Dropping nothing (K >= new leaves) is a
    no-op. Node ids are compacted after removal.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if len(graph.new_leaves) <= K:
        return
    ranked = sorted(graph.new_leaves, key=lambda i: (-probs[i], i))
    drop = set(ranked[K:])
    keep = [n for n in graph.nodes if n.node_id not in drop]
    remap = {n.node_id: k for k, n in enumerate(keep)}
    for n in keep:
        n.node_id = remap[n.node_id]
        if n.parent is not None:
            n.parent = remap[n.parent]
    graph.nodes = keep
    graph.conn = {(remap[i], remap[j]): w for (i, j), w in graph.conn.items()
                  if i not in drop and j not in drop}
    graph.edge_emb = {(remap[i], remap[j]): e for (i, j), e in graph.edge_emb.items()
                      if i not in drop and j not in drop}
    graph.env_to_internal = {e: remap[i] for e, i in graph.env_to_internal.items()}
    graph.env_to_leaf = {e: remap[i] for e, i in graph.env_to_leaf.items()
                         if i not in drop}
    graph.current = remap[graph.current]
    graph.new_leaves = [remap[i] for i in graph.new_leaves if i not in drop]


def plan_route(graph: NavGraph, start: int, target: int) -> list[int]:
    """Fewest-hop route between graph nodes, as a node-id sequence.

    Routing runs over internal nodes; a leaf target is reached through its
    parent. Among equal-length routes the lexicographically smallest id
    sequence wins. ``start == target`` gives the single-node route.
    """
    tgt = graph.nodes[target]
    goal = tgt.parent if tgt.role == LEAF else target
    dist = {goal: 0}
    frontier = [goal]
    while frontier:
        nxt = []
        for u in frontier:
            for v in graph.internal_neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    if start not in dist:
        raise GraphProtocolError(
            f"graph node {start} cannot reach {target}; memory out of sync")
    route = [start]
    while route[-1] != goal:
        here = route[-1]
        route.append(min(v for v in graph.internal_neighbors(here)
                         if dist.get(v, np.inf) == dist[here] - 1))
    if tgt.role == LEAF:
        route.append(target)
    return route


@dataclass
class PathMetric:
    variant: str = "ndtw"     # "ndtw" | "cls"
    d_th: float = 3.0

    def __call__(self, world: WorldGraph, traj: list[int], ref: list[int]) -> float:
        if self.variant == "ndtw":
            return ndtw(world, traj, ref, self.d_th)
        if self.variant == "cls":
            return cls_score(world, traj, ref, self.d_th)
        raise ValueError(f"unknown path metric {self.variant!r}")


def graph_supervision(graph: NavGraph, world: WorldGraph, traj: list[int],
                      ref: list[int], metric: PathMetric) -> tuple[int, bool]:
    """Best graph action to imitate given the trajectory so far.

    Scores every policy candidate whose location lies on the reference
    route by the path metric of the trajectory extended with the full jump
    route to that candidate; the stop candidate extends with nothing.
    Ties prefer the candidate furthest along the reference. When no
    candidate touches the reference, falls back to the candidate fewest
    graph hops from it and reports the fallback via the second value.
    """
    on_ref = []
    for c in graph.candidates():
        env = graph.nodes[c].env_node
        if env in ref:
            on_ref.append((c, max(i for i, r in enumerate(ref) if r == env)))
    if on_ref:
        best, best_key = None, None
        for c, ref_pos in on_ref:
            ext = [] if c == graph.current else [
                graph.nodes[v].env_node for v in plan_route(graph, graph.current, c)[1:]]
            key = (metric(world, traj + ext, ref), ref_pos)
            if best is None or key > best_key:
                best, best_key = c, key
        return best, False
    # nobody on the reference: steer toward it by graph distance
    hops = _hops_to_envs(graph, set(ref))
    best = min(graph.candidates(), key=lambda c: (hops.get(c, np.inf), c))
    return best, True


def _hops_to_envs(graph: NavGraph, env_set: set[int]) -> dict[int, int]:
    """Undirected BFS distance from every graph node to the env-node set."""
    dist: dict[int, int] = {}
    frontier = [n.node_id for n in graph.nodes if n.env_node in env_set]
    for i in frontier:
        dist[i] = 0
    neighbors: dict[int, set[int]] = {n.node_id: set() for n in graph.nodes}
    for (i, j), w in graph.conn.items():
        if w.sum() > 0:
            neighbors[i].add(j)
            neighbors[j].add(i)
    while frontier:
        nxt = []
        for u in frontier:
            for v in neighbors[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist
