"""Imitation training: rollouts, supervision, loss, and the epoch loop.

An episode rolls out as a loop of decisions. Each decision the agent
registers its location in the graph memory, plans over the pooled proxy
graph, scores the action set, and receives a supervision label — either
the route-fidelity oracle over the memory or a recomputed shortest path
to the goal. Expert forcing follows the label, student forcing samples
the policy, greedy evaluation takes the argmax. Losses are per-step
cross-entropy against the label, averaged by default.

The local-action baseline shares the encoder/decoder and heads but keeps
no memory: it scores only the current node's actions plus a stop entry.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .agent import attend, decoder_step, encode_instruction, initial_state
from .checkpoint import load_checkpoint, save_checkpoint
from .episodes import Episode
from .graph import (NavGraph, PathMetric, expand, graph_supervision,
                    plan_route, prune_topk, _hops_to_envs)
from .metrics import aggregate, nav_metrics
from .model import ModelConfig, ModelParams, init_model, load_model_params
from .optim import Adam
from .planner import (baseline_policy, check_step_invariants,
                      multi_channel_plan, policy)
from .tensor import NumericError, Tape, backward
from .world import observe, shortest_path, step


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 8
    forcing: str = "warmup"        # expert | student | warmup | scheduled
    warmup_epochs: int = 1
    expert_ratio: float = 0.5      # scheduled forcing only
    supervision: str = "graph"     # graph | shortest
    metric: str = "ndtw"           # label metric: ndtw | cls
    d_th: float = 3.0
    budget: int = 10               # decision limit per episode
    seed: int = 0
    loss_average: bool = True
    validate_every: int = 1
    check_invariants: bool = True

    def __post_init__(self):
        if self.lr < 0:
            raise TrainError(f"lr must be >= 0, got {self.lr}")
        if self.forcing not in ("expert", "student", "warmup", "scheduled"):
            raise TrainError(f"unknown forcing mode {self.forcing!r}")
        if self.supervision not in ("graph", "shortest"):
            raise TrainError(f"unknown supervision mode {self.supervision!r}")


@dataclass
class StepRecord:
    t: int
    probs: np.ndarray              # (k,) policy distribution
    candidates: list[int]          # graph node ids / local action ids
    chosen: int                    # entry of candidates
    label_node: int
    label_index: int
    route: list[int]               # env nodes entered executing the choice
    fallback: bool
    stop: bool
    logits: T.Tensor = field(repr=False, default=None)


@dataclass
class Rollout:
    trajectory: list[int]          # env nodes, starting at the start node
    records: list[StepRecord]
    stopped: bool


def shortest_path_supervision(graph: NavGraph, world, goal: int) -> tuple[int, bool]:
    """Label = first move of the current shortest path to the goal."""
    cur_env = graph.nodes[graph.current].env_node
    if cur_env == goal:
        return graph.current, False
    path = shortest_path(world, cur_env, goal)
    nxt = path[1]
    cand = graph.env_to_leaf.get(nxt)
    if cand is None:
        cand = graph.env_to_internal.get(nxt)
    if cand is not None:
        return cand, False
    # the pruned frontier lost that direction; steer by graph distance
    hops = _hops_to_envs(graph, set(path))
    best = min(graph.candidates(), key=lambda c: (hops.get(c, np.inf), c))
    return best, True


def _choose(mode: str, candidates: list[int], probs: np.ndarray,
            label: int, rng: np.random.Generator | None) -> int:
    if mode == "expert":
        return label
    if mode == "greedy":
        return candidates[int(np.argmax(probs))]
    if mode == "student":
        if rng is None:
            raise TrainError("student forcing needs a generator")
        p = probs / probs.sum()
        return candidates[int(rng.choice(len(candidates), p=p))]
    raise TrainError(f"unknown rollout mode {mode!r}")


def run_episode(episode: Episode, model: ModelParams, tcfg: TrainConfig,
                mode: str, rng: np.random.Generator | None = None) -> Rollout:
    if model.cfg.kind == "baseline":
        return _run_baseline(episode, model, tcfg, mode, rng)
    world = episode.world
    pcfg = model.cfg.planner
    metric = PathMetric(tcfg.metric, tcfg.d_th)
    enc = encode_instruction(episode.tokens, model.agent)
    env = episode.start
    obs = observe(world, env)
    state = initial_state(enc, env)
    state = decoder_step(state, obs.location_feature, enc, model.agent)
    graph = NavGraph()
    records: list[StepRecord] = []
    stopped = False
    for t in range(tcfg.budget):
        # the planner and the policy query condition on the *current*
        # instruction reading, not a static summary — token->landmark
        # matching needs the attended row first-hand
        _, c_sum = attend(state.h, enc, model.agent)
        query = T.concat([state.h, c_sum], axis=-1)
        expand(graph, env, obs, model.graph)
        if len(graph.new_leaves) > pcfg.top_k:
            with Tape():   # throwaway pass just to rank fresh leaves
                pre = policy(query,
                             multi_channel_plan(graph, state.h, c_sum,
                                                model.channels, pcfg),
                             graph, model.w_hv)
            ranked = dict(zip(pre.candidates, pre.probs.data[0]))
            prune_topk(graph, {i: float(ranked[i]) for i in graph.new_leaves},
                       pcfg.top_k)
        assigns: list | None = [] if tcfg.check_invariants else None
        refined = multi_channel_plan(graph, state.h, c_sum, model.channels,
                                     pcfg, collect_assignments=assigns)
        res = policy(query, refined, graph, model.w_hv)
        if assigns is not None:
            for a, proxy in assigns:
                check_step_invariants(a, proxy)
        if tcfg.supervision == "graph":
            label, fb = graph_supervision(graph, world, state.trajectory,
                                          episode.path, metric)
        else:
            label, fb = shortest_path_supervision(graph, world, episode.goal)
        label_index = res.candidates.index(label)
        probs = res.probs.data[0].copy()
        chosen = _choose(mode, res.candidates, probs, label, rng)
        rec = StepRecord(t=t, probs=probs, candidates=list(res.candidates),
                         chosen=chosen, label_node=label,
                         label_index=label_index, route=[], fallback=fb,
                         stop=(chosen == graph.current), logits=res.logits)
        records.append(rec)
        if rec.stop:
            stopped = True
            break
        route = plan_route(graph, graph.current, chosen)
        try:
            for nxt in route[1:]:
                nxt_env = graph.nodes[nxt].env_node
                env = step(world, env, world.action_to(env, nxt_env))
                obs = observe(world, env)
                state = decoder_step(state, obs.location_feature, enc,
                                     model.agent).moved(env)
                rec.route.append(env)
        except Exception as exc:
            raise TrainError(
                f"route execution failed at step {t} of episode "
                f"{episode.start}->{episode.goal} (route {route})") from exc
    return Rollout(trajectory=state.trajectory, records=records, stopped=stopped)


def _run_baseline(episode: Episode, model: ModelParams, tcfg: TrainConfig,
                  mode: str, rng: np.random.Generator | None) -> Rollout:
    from .graph import _affine_tanh

    world = episode.world
    enc = encode_instruction(episode.tokens, model.agent)
    env = episode.start
    obs = observe(world, env)
    state = initial_state(enc, env)
    state = decoder_step(state, obs.location_feature, enc, model.agent)
    records: list[StepRecord] = []
    stopped = False
    for t in range(tcfg.budget):
        _, c_sum = attend(state.h, enc, model.agent)
        act_rows = [_affine_tanh(f, model.graph.act_w, model.graph.act_b)
                    for f in obs.action_features]
        embs = T.concat(act_rows + [model.stop_embed], axis=0)
        res = baseline_policy(state.h, c_sum, embs,
                              model.channels[0].plan_gnn, model.w_hv)
        stop_index = len(obs.action_features)
        if env == episode.goal:
            label_index = stop_index
        else:
            nxt = shortest_path(world, env, episode.goal)[1]
            label_index = world.action_to(env, nxt)
        probs = res.probs.data[0].copy()
        chosen = _choose(mode, res.candidates, probs, label_index, rng)
        rec = StepRecord(t=t, probs=probs, candidates=list(res.candidates),
                         chosen=chosen, label_node=label_index,
                         label_index=label_index, route=[], fallback=False,
                         stop=(chosen == stop_index), logits=res.logits)
        records.append(rec)
        if rec.stop:
            stopped = True
            break
        env = step(world, env, chosen)
        obs = observe(world, env)
        state = decoder_step(state, obs.location_feature, enc,
                             model.agent).moved(env)
        rec.route.append(env)
    return Rollout(trajectory=state.trajectory, records=records, stopped=stopped)


def compute_loss(records: list[StepRecord], average: bool = True) -> T.Tensor:
    if not records:
        raise TrainError("no step records to score")
    total = None
    for rec in records:
        k = rec.logits.data.shape[1]
        if not 0 <= rec.label_index < k:
            raise TrainError(
                f"label index {rec.label_index} outside {k}-way distribution "
                f"at step {rec.t}")
        term = T.cross_entropy_with_logits(rec.logits,
                                           np.array([rec.label_index]))
        total = term if total is None else T.add(total, term)
    if average:
        total = T.mul(total, T.Tensor(np.array(1.0 / len(records))))
    return total


def evaluate(episodes: list[Episode], model: ModelParams,
             tcfg: TrainConfig) -> tuple[dict, list]:
    """Greedy rollouts; returns aggregate metrics (with mean loss) per split."""
    per_ep = []
    losses = []
    for ep in episodes:
        roll = run_episode(ep, model, tcfg, mode="greedy")
        per_ep.append(nav_metrics(ep.world, roll.trajectory, ep.path,
                                  tcfg.d_th))
        losses.append(float(compute_loss(roll.records,
                                         tcfg.loss_average).data))
    agg = aggregate(per_ep)
    agg["loss"] = float(np.mean(losses))
    return agg, per_ep


def _forcing_mode(tcfg: TrainConfig, epoch: int, rng: np.random.Generator) -> str:
    if tcfg.forcing == "expert":
        return "expert"
    if tcfg.forcing == "student":
        return "student"
    if tcfg.forcing == "warmup":
        return "expert" if epoch < tcfg.warmup_epochs else "student"
    return "expert" if rng.random() < tcfg.expert_ratio else "student"


@dataclass
class TrainResult:
    model: ModelParams
    adam: Adam
    history: list[dict]
    best_unseen_sr: float
    best_path: str | None
    last_path: str | None


def train(splits: dict[str, list[Episode]], mcfg: ModelConfig,
          tcfg: TrainConfig, out_dir: str | None = None,
          resume: str | None = None) -> TrainResult:
    """Epoch loop with gradient accumulation and split validation.

    ``splits`` needs a nonempty ``train`` list; ``val_seen``/``val_unseen``
    are optional. With an output directory, writes ``metrics.jsonl`` plus
    ``last.ckpt`` every epoch and ``best.ckpt`` whenever validation-unseen
    success improves. ``resume`` restarts mid-run from a ``last.ckpt``.
    """
    train_eps = splits.get("train", [])
    if not train_eps:
        raise TrainError("empty training split")
    model = init_model(mcfg, tcfg.seed)
    named = model.named()
    adam = Adam(named, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    rng = np.random.default_rng(tcfg.seed)
    history: list[dict] = []
    best_sr = -1.0
    start_epoch = 0
    if resume is not None:
        values, adam_state, extra = load_checkpoint(resume)
        model = load_model_params(mcfg, tcfg.seed, {k: v.data for k, v in
                                                    values.items()})
        named = model.named()
        adam = Adam(named, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
        if adam_state is not None:
            adam.load_state_dict(adam_state)
        rng.bit_generator.state = extra["rng_state"]
        start_epoch = extra["epoch"] + 1
        best_sr = extra.get("best_unseen_sr", -1.0)
        history = extra.get("history", [])
    best_path = last_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        best_path = os.path.join(out_dir, "best.ckpt")
        last_path = os.path.join(out_dir, "last.ckpt")
        if resume is None:   # fresh run: a rerun must reproduce the log exactly
            open(os.path.join(out_dir, "metrics.jsonl"), "w").close()
    cfg_snapshot = {"model_cfg": asdict(mcfg), "train_cfg": asdict(tcfg)}

    def log(record: dict) -> None:
        history.append(record)
        if out_dir:
            with open(os.path.join(out_dir, "metrics.jsonl"), "a") as fh:
                fh.write(json.dumps(record) + "\n")

    for epoch in range(start_epoch, tcfg.epochs):
        order = rng.permutation(len(train_eps))
        pending = 0
        epoch_losses = []
        epoch_rolls = []
        for pos, idx in enumerate(order):
            ep = train_eps[int(idx)]
            mode = _forcing_mode(tcfg, epoch, rng)
            try:
                with Tape() as tp:
                    roll = run_episode(ep, model, tcfg, mode, rng)
                    loss = compute_loss(roll.records, tcfg.loss_average)
                    backward(loss, tp)
            except NumericError as exc:
                raise TrainError(
                    f"non-finite value in epoch {epoch}, episode index "
                    f"{int(idx)} ({ep.start}->{ep.goal}): {exc}") from exc
            epoch_losses.append(float(loss.data))
            epoch_rolls.append(
                nav_metrics(ep.world, roll.trajectory, ep.path, tcfg.d_th))
            pending += 1
            if pending == tcfg.batch_size or pos == len(order) - 1:
                adam.step(scale=1.0 / pending)
                for p in named.values():
                    p.grad[...] = 0.0
                pending = 0
        train_agg = aggregate(epoch_rolls)
        train_agg["loss"] = float(np.mean(epoch_losses))
        log({"epoch": epoch, "split": "train", **_round(train_agg)})
        if (epoch + 1) % tcfg.validate_every == 0 or epoch == tcfg.epochs - 1:
            for split in ("val_seen", "val_unseen"):
                if not splits.get(split):
                    continue
                agg, _ = evaluate(splits[split], model, tcfg)
                log({"epoch": epoch, "split": split, **_round(agg)})
                if split == "val_unseen" and agg["SR"] >= best_sr:
                    best_sr = agg["SR"]
                    if best_path:
                        save_checkpoint(best_path, model.named(), adam=None,
                                        extra={"epoch": epoch,
                                               "val_unseen_sr": best_sr,
                                               **cfg_snapshot})
        if last_path:
            save_checkpoint(last_path, model.named(), adam=adam,
                            extra={"epoch": epoch,
                                   "rng_state": rng.bit_generator.state,
                                   "best_unseen_sr": best_sr,
                                   "history": history,
                                   **cfg_snapshot})
    return TrainResult(model=model, adam=adam, history=history,
                       best_unseen_sr=best_sr, best_path=best_path,
                       last_path=last_path)


def _round(record: dict) -> dict:
    return {k: round(v, 6) if isinstance(v, float) else v
            for k, v in record.items()}
