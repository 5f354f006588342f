"""Dataset assembly: train / val-seen / val-unseen splits.

Seen splits share a pool of worlds; the unseen split draws from worlds the
training set never touches, so unseen success measures generalisation to
new layouts rather than memorised geometry.

Twisted routes can be structurally unlearnable: if the route-fidelity
oracle ever prefers a different continuation than the annotated route, an
expert-forced rollout would diverge from it. ``expert_consistent`` replays
the label chain over a weight-free graph memory and checks the annotated
route comes back exactly; inconsistent draws are resampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .episodes import Episode, EpisodeGenError, generate_episode
from .graph import (GraphParams, NavGraph, PathMetric, expand,
                    graph_supervision, plan_route)
from . import tensor as T
from .world import WorldConfig, WorldGraph, generate_world, observe


@dataclass
class DatagenConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    n_nodes_range: tuple[int, int] | None = None   # per-world size draw
    n_worlds_seen: int = 4
    n_worlds_unseen: int = 2
    n_train: int = 80
    n_val_seen: int = 20
    n_val_unseen: int = 20
    mode: str = "mixed"            # shortest | twisted | mixed
    twisted_frac: float = 0.5      # mixed only
    hop_range: tuple[int, int] = (3, 6)
    metric: str = "ndtw"
    d_th: float = 3.0
    filter_consistency: bool = True
    seed: int = 0


def _shadow_params(d_obs: int) -> GraphParams:
    """Zero-weight nets: embeddings never drive labels, only structure does."""
    z = lambda *s: T.Tensor(np.zeros(s))
    return GraphParams(loc_w=z(d_obs, 2), loc_b=z(1, 2),
                       act_w=z(d_obs, 2), act_b=z(1, 2),
                       edge_w=z(d_obs, 2), edge_b=z(1, 2))


def expert_consistent(episode: Episode, metric: PathMetric,
                      budget: int | None = None) -> bool:
    """Does following the oracle labels replay the annotated route exactly?

    Runs the label chain over the graph memory without any learned weights
    (labels depend only on connectivity and the path metric, never on
    embeddings, as long as no pruning happens).
    """
    world = episode.world
    params = _shadow_params(world.cfg.feature_dim())
    graph = NavGraph()
    env = episode.start
    traj = [env]
    if budget is None:
        budget = len(episode.path) + 4
    for _ in range(budget):
        expand(graph, env, observe(world, env), params)
        label, fallback = graph_supervision(graph, world, traj,
                                            episode.path, metric)
        if fallback:
            return False
        if label == graph.current:
            return traj == episode.path
        for nxt in plan_route(graph, graph.current, label)[1:]:
            env = graph.nodes[nxt].env_node
            traj.append(env)
    return False


def _draw(world: WorldGraph, mode: str, cfg: DatagenConfig,
          rng: np.random.Generator) -> Episode:
    metric = PathMetric(cfg.metric, cfg.d_th)
    for _ in range(60):
        ep = generate_episode(world, mode, int(rng.integers(2 ** 31)),
                              cfg.hop_range)
        if not cfg.filter_consistency or expert_consistent(ep, metric):
            return ep
    raise EpisodeGenError(
        f"no expert-consistent {mode} episode after 60 draws "
        f"(world radius {world.radius_used:.2f})")


def _mode_for(i: int, cfg: DatagenConfig, rng: np.random.Generator) -> str:
    if cfg.mode != "mixed":
        return cfg.mode
    return "twisted" if rng.random() < cfg.twisted_frac else "shortest"


def generate_splits(cfg: DatagenConfig) -> dict[str, list[Episode]]:
    """Returns {"train", "val_seen", "val_unseen"} episode lists."""
    rng = np.random.default_rng(cfg.seed)

    def make_world(seed: int) -> WorldGraph:
        wc = cfg.world
        if cfg.n_nodes_range is not None:
            lo, hi = cfg.n_nodes_range
            wc = replace(wc, n_nodes=int(rng.integers(lo, hi + 1)))
        return generate_world(wc, seed=seed)

    seen = [make_world(cfg.seed * 10_000 + i) for i in range(cfg.n_worlds_seen)]
    unseen = [make_world(cfg.seed * 10_000 + 5000 + i)
              for i in range(cfg.n_worlds_unseen)]
    splits: dict[str, list[Episode]] = {}
    for name, pool, count in (("train", seen, cfg.n_train),
                              ("val_seen", seen, cfg.n_val_seen),
                              ("val_unseen", unseen, cfg.n_val_unseen)):
        eps = []
        for i in range(count):
            world = pool[i % len(pool)]
            eps.append(_draw(world, _mode_for(i, cfg, rng), cfg, rng))
        splits[name] = eps
    return splits
