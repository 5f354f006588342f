import numpy as np

from graphnav import tensor as T
from graphnav.graph import GraphParams
from graphnav.world import WorldConfig, WorldGraph, _build_features


def finite_difference(f, params, h=1e-5):
    """Central finite differences of scalar-valued f() w.r.t. each param tensor."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, floor=1e-8):
    """floor sets the scale below which differences count as absolute noise."""
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), floor)
        err = np.abs(a - n) / denom
        assert err.max() < rel, f"grad mismatch: max rel err {err.max():.3e}"


def build_world(positions, edges, vocab=8, noise=0.0, seed=0):
    """Hand-laid world with features, for tests that need exact geometry."""
    n = len(positions)
    nbrs = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    rng = np.random.default_rng(seed)
    world = WorldGraph(cfg=WorldConfig(n_nodes=n, vocab=vocab, noise=noise),
                       positions=np.asarray(positions, dtype=float),
                       landmarks=rng.integers(0, vocab, size=n),
                       neighbors=[sorted(x) for x in nbrs],
                       feature_seed=seed, radius_used=0.0, gen_attempts=1)
    _build_features(world)
    return world


def graph_params(d_obs, d, seed=0, requires_grad=False):
    rng = np.random.default_rng(seed)

    def mk(shape):
        return T.Tensor(rng.normal(scale=0.3, size=shape), requires_grad=requires_grad)

    return GraphParams(loc_w=mk((d_obs, d)), loc_b=mk((1, d)),
                       act_w=mk((d_obs, d)), act_b=mk((1, d)),
                       edge_w=mk((d_obs, d)), edge_b=mk((1, d)))


def fresh_graph(world, params, start):
    from graphnav.graph import NavGraph, expand
    from graphnav.world import observe

    g = NavGraph()
    expand(g, start, observe(world, start), params)
    return g


def walk_to_leaf(g, world, params, leaf_id):
    """Execute the jump route to a leaf through the environment."""
    from graphnav.graph import expand, plan_route
    from graphnav.world import observe, step

    route = plan_route(g, g.current, leaf_id)
    env = g.nodes[g.current].env_node
    for nxt in route[1:]:
        env = step(world, env, world.action_to(env, g.nodes[nxt].env_node))
    expand(g, env, observe(world, env), params)
    return env


def random_rollout(world, params, seed, steps=6):
    rng = np.random.default_rng(seed)
    start = int(rng.integers(world.n_nodes))
    g = fresh_graph(world, params, start)
    visited = [start]
    for _ in range(steps):
        leaves = g.leaf_ids()
        if not leaves:
            break
        env = walk_to_leaf(g, world, params, int(rng.choice(leaves)))
        visited.append(env)
    return g, visited


def gnn_params(d_node, d_edge, d_ctx, d, d_out, rounds, seed=0,
               requires_grad=False, n_types=3):
    from graphnav.gnn import GnnParams

    rng = np.random.default_rng(seed)

    def mk(shape):
        return T.Tensor(rng.normal(scale=0.4, size=shape), requires_grad=requires_grad)

    return GnnParams(
        node_in_w=mk((d_node + d_ctx, d)), node_in_b=mk((1, d)),
        edge_in_w=mk((d_edge + d_ctx, d)), edge_in_b=mk((1, d)),
        msg_w=[mk((3 * d, d)) for _ in range(n_types)],
        msg_b=[mk((1, d)) for _ in range(n_types)],
        gate_w=mk((2 * d, d)), gate_b=mk((1, d)),
        cand_w=mk((2 * d, d)), cand_b=mk((1, d)),
        out_w=mk((d, d_out)), rounds=rounds)


def channel_params(d, d_ctx, cfg, seed=0, requires_grad=False):
    from graphnav.planner import ChannelParams

    return ChannelParams(
        pool_gnn=gnn_params(d, d, d_ctx, cfg.pool_dim, cfg.proxy_size,
                            cfg.pool_rounds, seed=seed,
                            requires_grad=requires_grad),
        plan_gnn=gnn_params(d, d, d_ctx, cfg.plan_dim, d,
                            cfg.plan_rounds, seed=seed + 1000,
                            requires_grad=requires_grad))
