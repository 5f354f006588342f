"""Parameter bundle: agent, graph input networks, planner channels, heads.

One structure serves both the graph-planning navigator and the local-action
baseline; the model kind picks the rollout path, and parameters unused by a
kind simply receive zero gradient. All tensors are float64 leaves created
from a single seeded generator, so construction is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .agent import AgentParams, LstmParams
from .gnn import GnnParams
from .graph import GraphParams
from .planner import ChannelParams, PlannerConfig


@dataclass
class ModelConfig:
    kind: str = "egp"              # "egp" | "baseline"
    token_vocab: int = 33          # instruction token ids
    d_obs: int = 34                # observation feature dim
    d_emb: int = 32                # token embedding dim
    d: int = 256                   # graph embedding dim
    d_h: int = 128                 # decoder hidden dim
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        if self.kind not in ("egp", "baseline"):
            raise ValueError(f"unknown model kind {self.kind!r}")


@dataclass
class ModelParams:
    cfg: ModelConfig
    agent: AgentParams
    graph: GraphParams
    channels: list[ChannelParams]
    w_hv: T.Tensor                 # (2*d_h, d) policy head over [h; attended]
    stop_embed: T.Tensor           # (1, d) baseline stop pseudo-action

    def named(self) -> dict[str, T.Tensor]:
        out = self.agent.named("agent")
        out.update(self.graph.named("graph"))
        for i, ch in enumerate(self.channels):
            out.update(ch.named(f"ch{i}"))
        out["w_hv"] = self.w_hv
        out["stop_embed"] = self.stop_embed
        return out


def _init(rng: np.random.Generator, shape: tuple[int, ...],
          scale: float | None = None) -> T.Tensor:
    """Semi-orthogonal init: keeps distinct inputs (e.g. token codes)
    distinct through the map, which the bilinear policy head relies on.

    ``scale`` is the target entry std, fan-in (1/sqrt(rows)) by default;
    the orthonormal factor is rescaled to match, so magnitudes are those
    of the equivalent Gaussian init and only the direction structure
    changes.
    """
    rows, cols = shape
    if scale is None:
        scale = 1.0 / np.sqrt(rows)
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))          # fix QR sign ambiguity
    if rows < cols:
        q = q.T
    # entry rms of semi-orthogonal q is 1/sqrt(max(rows, cols))
    q = q[:rows, :cols] * (scale * np.sqrt(max(rows, cols)))
    # C-order copy: the transpose above leaves an F-order array, and BLAS
    # products differ in the last bit by layout, which would break bit-exact
    # resume (checkpoints restore C-order).
    return T.Tensor(np.ascontiguousarray(q), requires_grad=True)


def _zeros(shape: tuple[int, ...]) -> T.Tensor:
    return T.Tensor(np.zeros(shape), requires_grad=True)


def _lstm(rng: np.random.Generator, d_in: int, d_h: int) -> LstmParams:
    def w():
        return _init(rng, (d_in, d_h))

    def u():
        return _init(rng, (d_h, d_h))

    p = LstmParams(wi=w(), ui=u(), bi=_zeros((1, d_h)),
                   wf=w(), uf=u(), bf=_zeros((1, d_h)),
                   wo=w(), uo=u(), bo=_zeros((1, d_h)),
                   wg=w(), ug=u(), bg=_zeros((1, d_h)))
    p.bf.data += 1.0   # start remembering; standard forget-gate bias
    return p


def _gnn(rng: np.random.Generator, d_node: int, d_edge: int, d_ctx: int,
         d: int, d_out: int, rounds: int) -> GnnParams:
    return GnnParams(
        node_in_w=_init(rng, (d_node + d_ctx, d)), node_in_b=_zeros((1, d)),
        edge_in_w=_init(rng, (d_edge + d_ctx, d)), edge_in_b=_zeros((1, d)),
        msg_w=[_init(rng, (3 * d, d)) for _ in range(3)],
        msg_b=[_zeros((1, d)) for _ in range(3)],
        gate_w=_init(rng, (2 * d, d)), gate_b=_zeros((1, d)),
        cand_w=_init(rng, (2 * d, d)), cand_b=_zeros((1, d)),
        out_w=_init(rng, (d, d_out)), rounds=rounds)


def init_model(cfg: ModelConfig, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    d, d_h, pc = cfg.d, cfg.d_h, cfg.planner
    agent = AgentParams(
        embed=_init(rng, (cfg.token_vocab, cfg.d_emb), scale=1.0),
        encoder=_lstm(rng, cfg.d_emb, d_h),
        attn_w=_init(rng, (d_h, d_h)),
        decoder=_lstm(rng, cfg.d_obs + d_h, d_h))
    graph = GraphParams(
        loc_w=_init(rng, (cfg.d_obs, d)), loc_b=_zeros((1, d)),
        act_w=_init(rng, (cfg.d_obs, d)), act_b=_zeros((1, d)),
        edge_w=_init(rng, (cfg.d_obs, d)), edge_b=_zeros((1, d)))
    d_ctx = 2 * d_h
    channels = [
        ChannelParams(
            pool_gnn=_gnn(rng, d, d, d_ctx, pc.pool_dim, pc.proxy_size,
                          pc.pool_rounds),
            plan_gnn=_gnn(rng, d, d, d_ctx, pc.plan_dim, d, pc.plan_rounds))
        for _ in range(pc.n_channels)]
    return ModelParams(cfg=cfg, agent=agent, graph=graph, channels=channels,
                       w_hv=_init(rng, (2 * d_h, d)),
                       stop_embed=_init(rng, (1, d), scale=0.5))


def restore_model(path) -> tuple[ModelParams, dict]:
    """Rebuild a model from a checkpoint carrying its own config snapshot."""
    from .checkpoint import load_checkpoint

    values, _, extra = load_checkpoint(path)
    if "model_cfg" not in extra:
        raise ValueError(f"{path}: checkpoint has no embedded model config")
    raw = dict(extra["model_cfg"])
    raw["planner"] = PlannerConfig(**raw["planner"])
    cfg = ModelConfig(**raw)
    model = load_model_params(cfg, seed=0,
                              values={k: v.data for k, v in values.items()})
    return model, extra


def load_model_params(cfg: ModelConfig, seed: int,
                      values: dict[str, np.ndarray]) -> ModelParams:
    """Rebuild the structure, then overwrite tensor values by name."""
    model = init_model(cfg, seed)
    named = model.named()
    missing = set(named) - set(values)
    extra = set(values) - set(named)
    if missing or extra:
        raise ValueError(
            f"checkpoint does not match model: missing {sorted(missing)[:3]}, "
            f"unexpected {sorted(extra)[:3]}")
    for name, tensor in named.items():
        if tensor.data.shape != values[name].shape:
            raise ValueError(
                f"shape mismatch for {name}: model {tensor.data.shape}, "
                f"checkpoint {values[name].shape}")
        tensor.data = values[name].astype(np.float64)
    return model
