"""Procedural navigation worlds: random geometric graphs with landmarks.

Nodes live in a square arena (meters). Each node carries a landmark token
and a noisy feature vector; each outgoing action slot carries a feature
built from the target node's landmark and the travel direction. Feature
vectors are a deterministic function of the stored ``feature_seed`` so a
world serializes as structure only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

A_MAX = 16  # cap on outgoing action slots per node


class WorldGenError(RuntimeError):
    pass


class ActionError(ValueError):
    """Invalid action id for a node."""


@dataclass
class WorldConfig:
    n_nodes: int = 60
    radius: float | None = None   # None: auto from node density
    vocab: int = 30               # landmark vocabulary size
    noise: float = 0.1            # feature noise sigma
    side: float = 20.0            # arena edge length in meters

    def feature_dim(self) -> int:
        # landmark one-hot + (position or direction) + bias + noise channel
        return self.vocab + 4


@dataclass
class Observation:
    location_feature: np.ndarray
    action_features: list[np.ndarray]   # slot k -> feature of action k
    neighbor_ids: list[int]             # slot k -> target node


@dataclass
class WorldGraph:
    cfg: WorldConfig
    positions: np.ndarray               # (n, 2) meters
    landmarks: np.ndarray               # (n,) token ids in [0, vocab)
    neighbors: list[list[int]]          # ascending node ids per node
    feature_seed: int
    radius_used: float
    gen_attempts: int
    node_features: np.ndarray = field(repr=False, default=None)
    action_features: list[list[np.ndarray]] = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.neighbors)

    def edge_length(self, u: int, v: int) -> float:
        return float(np.linalg.norm(self.positions[u] - self.positions[v]))

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n_nodes) for v in self.neighbors[u] if u < v]

    def action_to(self, u: int, v: int) -> int:
        """Slot index at u leading to v."""
        try:
            return self.neighbors[u].index(v)
        except ValueError:
            raise ActionError(f"no action from node {u} to node {v}") from None

    def to_dict(self) -> dict:
        return {
            "cfg": {"n_nodes": self.cfg.n_nodes, "radius": self.cfg.radius,
                    "vocab": self.cfg.vocab, "noise": self.cfg.noise,
                    "side": self.cfg.side},
            "positions": self.positions.tolist(),
            "landmarks": self.landmarks.tolist(),
            "neighbors": self.neighbors,
            "feature_seed": self.feature_seed,
            "radius_used": self.radius_used,
            "gen_attempts": self.gen_attempts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldGraph":
        cfg = WorldConfig(**d["cfg"])
        world = cls(
            cfg=cfg,
            positions=np.asarray(d["positions"], dtype=np.float64),
            landmarks=np.asarray(d["landmarks"], dtype=np.int64),
            neighbors=[list(map(int, ns)) for ns in d["neighbors"]],
            feature_seed=int(d["feature_seed"]),
            radius_used=float(d["radius_used"]),
            gen_attempts=int(d["gen_attempts"]),
        )
        _build_features(world)
        return world


def _connected(n: int, neighbors: list[list[int]]) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in neighbors[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def _auto_radius(n: int, side: float) -> float:
    return side * math.sqrt((math.log(max(n, 2)) + 1.0) / (math.pi * n))


def _build_features(world: WorldGraph) -> None:
    """Fill node/action feature arrays deterministically from feature_seed."""
    cfg = world.cfg
    d = cfg.feature_dim()
    rng = np.random.default_rng(world.feature_seed)
    n = world.n_nodes
    node_feats = np.zeros((n, d))
    for i in range(n):
        node_feats[i, world.landmarks[i]] = 1.0
        node_feats[i, cfg.vocab:cfg.vocab + 2] = world.positions[i] / cfg.side
        node_feats[i, cfg.vocab + 2] = 1.0
    node_feats += rng.normal(scale=cfg.noise, size=node_feats.shape)
    action_feats: list[list[np.ndarray]] = []
    for u in range(n):
        slots = []
        for v in world.neighbors[u]:
            f = np.zeros(d)
            f[world.landmarks[v]] = 1.0
            delta = world.positions[v] - world.positions[u]
            f[cfg.vocab:cfg.vocab + 2] = delta / max(np.linalg.norm(delta), 1e-12)
            f[cfg.vocab + 2] = 1.0
            slots.append(f + rng.normal(scale=cfg.noise, size=d))
        action_feats.append(slots)
    world.node_features = node_feats
    world.action_features = action_feats


def generate_world(cfg: WorldConfig, seed: int) -> WorldGraph:
    """Connected random geometric graph; deterministic per (cfg, seed).

    If the radius leaves the graph disconnected it is enlarged by 30% and
    generation retries with a fresh layout; the attempt count is recorded.
    """
    if cfg.n_nodes < 2:
        raise WorldGenError(f"need at least 2 nodes, got {cfg.n_nodes}")
    if cfg.vocab < 2:
        raise WorldGenError(f"need landmark vocab >= 2, got {cfg.vocab}")
    radius = cfg.radius if cfg.radius is not None else _auto_radius(cfg.n_nodes, cfg.side)
    max_attempts = 12
    for attempt in range(1, max_attempts + 1):
        rng = np.random.default_rng([seed, attempt])
        pos = rng.uniform(0.0, cfg.side, size=(cfg.n_nodes, 2))
        lms = rng.integers(0, cfg.vocab, size=cfg.n_nodes)
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        within = dist <= radius
        np.fill_diagonal(within, False)
        neighbors = [sorted(np.nonzero(within[u])[0].tolist()) for u in range(cfg.n_nodes)]
        if _connected(cfg.n_nodes, neighbors):
            _trim_degree(neighbors, dist)
            world = WorldGraph(cfg=cfg, positions=pos, landmarks=lms,
                               neighbors=neighbors,
                               feature_seed=int(rng.integers(2 ** 63)),
                               radius_used=radius, gen_attempts=attempt)
            _build_features(world)
            return world
        radius *= 1.3
    raise WorldGenError(
        f"could not connect world after {max_attempts} attempts (seed={seed})")


def _trim_degree(neighbors: list[list[int]], dist: np.ndarray) -> None:
    """Drop longest edges at nodes exceeding A_MAX, keeping connectivity."""
    n = len(neighbors)
    changed = True
    while changed:
        changed = False
        for u in range(n):
            if len(neighbors[u]) <= A_MAX:
                continue
            for v in sorted(neighbors[u], key=lambda w: -dist[u, w]):
                neighbors[u].remove(v)
                neighbors[v].remove(u)
                if _connected(n, neighbors):
                    changed = True
                    break
                neighbors[u].append(v)
                neighbors[u].sort()
                neighbors[v].append(u)
                neighbors[v].sort()
            else:
                raise WorldGenError("cannot trim node degree without disconnecting")


def observe(world: WorldGraph, node: int) -> Observation:
    if not 0 <= node < world.n_nodes:
        raise ActionError(f"no such node {node}")
    return Observation(
        location_feature=world.node_features[node],
        action_features=list(world.action_features[node]),
        neighbor_ids=list(world.neighbors[node]),
    )


def step(world: WorldGraph, node: int, action_id: int) -> int:
    if not 0 <= node < world.n_nodes:
        raise ActionError(f"no such node {node}")
    slots = world.neighbors[node]
    if not 0 <= action_id < len(slots):
        raise ActionError(f"invalid action id {action_id} at node {node} "
                          f"({len(slots)} actions available)")
    return slots[action_id]


def shortest_path(world: WorldGraph, src: int, dst: int) -> list[int]:
    """Dijkstra by edge length; deterministic tie-break on node id."""
    import heapq

    dist = {src: 0.0}
    parent: dict[int, int] = {}
    heap = [(0.0, src)]
    done: set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for v in world.neighbors[u]:
            nd = d + world.edge_length(u, v)
            if v not in dist or nd < dist[v] - 1e-15:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    if dst not in done:
        raise WorldGenError(f"no path from {src} to {dst}")
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    return path[::-1]


def path_length(world: WorldGraph, path: list[int]) -> float:
    return sum(world.edge_length(u, v) for u, v in zip(path, path[1:]))
