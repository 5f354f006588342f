"""Command-line harness: dataset generation, training, evaluation, sweeps.

Every command resolves a config (defaults + optional YAML overrides),
writes a snapshot of the resolved config next to its outputs, and logs
line-delimited JSON. Exit code 0 on success; failures print a diagnostic
to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config, save_config_snapshot
from .datagen import generate_splits
from .episodes import load_dataset, save_dataset, token_vocab_size
from .metrics import aggregate, nav_metrics
from .model import restore_model
from .trainer import TrainConfig, evaluate, run_episode, train

SPLIT_FILES = {"train": "train.jsonl", "val_seen": "val_seen.jsonl",
               "val_unseen": "val_unseen.jsonl"}


class CliError(RuntimeError):
    pass


def _snapshot(cfg: RunConfig, out: str) -> None:
    os.makedirs(out, exist_ok=True)
    save_config_snapshot(cfg, os.path.join(out, "config.yaml"))


def cmd_gen(cfg: RunConfig, out: str) -> int:
    _snapshot(cfg, out)
    splits = generate_splits(cfg.data)
    for name, fname in SPLIT_FILES.items():
        save_dataset(splits[name], os.path.join(out, fname))
        print(f"wrote {len(splits[name])} episodes to {fname}")
    return 0


def _load_splits(data_dir: str) -> dict:
    splits = {}
    for name, fname in SPLIT_FILES.items():
        path = os.path.join(data_dir, fname)
        if not os.path.exists(path):
            raise CliError(f"missing dataset file: {path}")
        splits[name] = load_dataset(path)
    return splits


def _sync_model_cfg(cfg: RunConfig, splits: dict):
    """Tie token/observation dims to the data actually being trained on."""
    world = splits["train"][0].world
    return dataclasses.replace(cfg.model,
                               token_vocab=token_vocab_size(world.cfg.vocab),
                               d_obs=world.cfg.feature_dim())


def cmd_train(cfg: RunConfig, data_dir: str, out: str,
              resume: str | None = None) -> int:
    splits = _load_splits(data_dir)
    _snapshot(cfg, out)
    mcfg = _sync_model_cfg(cfg, splits)
    result = train(splits, mcfg, cfg.train, out_dir=out, resume=resume)
    print(f"trained {cfg.train.epochs} epochs; best unseen SR "
          f"{result.best_unseen_sr:.3f}; checkpoints in {out}")
    return 0


def cmd_eval(checkpoint: str | None, data_path: str, out: str,
             expert: bool = False, budget: int | None = None) -> int:
    if not os.path.exists(data_path):
        raise CliError(f"missing dataset file: {data_path}")
    episodes = load_dataset(data_path)
    os.makedirs(out, exist_ok=True)
    if expert:
        per_ep = [nav_metrics(ep.world, ep.path, ep.path) for ep in episodes]
        agg = aggregate(per_ep)
    else:
        if checkpoint is None or not os.path.exists(checkpoint or ""):
            raise CliError(f"missing checkpoint: {checkpoint}")
        model, extra = restore_model(checkpoint)
        tcfg = TrainConfig(**extra.get("train_cfg", {}))
        if budget is not None:
            tcfg.budget = budget
        agg, per_ep = evaluate(episodes, model, tcfg)
    with open(os.path.join(out, "eval.jsonl"), "w") as fh:
        for ep, r in zip(episodes, per_ep):
            fh.write(json.dumps({"start": ep.start, "goal": ep.goal,
                                 **dataclasses.asdict(r)}) + "\n")
        fh.write(json.dumps({"summary": agg}) + "\n")
    print(json.dumps(agg))
    return 0


# ---------------------------------------------------------------- ablations

def _axis_settings(cfg: RunConfig, axis: str) -> list[tuple[str, RunConfig]]:
    def with_planner(label, **kw):
        planner = dataclasses.replace(cfg.model.planner, **kw)
        model = dataclasses.replace(cfg.model, planner=planner)
        return label, dataclasses.replace(cfg, model=model)

    if axis == "topk":
        return [with_planner("topk2", top_k=2), with_planner("topk4", top_k=4),
                with_planner("topk16", top_k=16)]
    if axis == "mp":
        return [with_planner("mp0", plan_rounds=0),
                with_planner("mp3", plan_rounds=3)]
    if axis == "channels":
        return [with_planner("ch1", n_channels=1),
                with_planner("ch3", n_channels=3)]
    if axis == "supervision":
        out = []
        for sup in ("shortest", "graph"):
            t = dataclasses.replace(cfg.train, supervision=sup)
            out.append((f"sup_{sup}", dataclasses.replace(cfg, train=t)))
        return out
    if axis == "graphdim":
        d = cfg.model.d
        return [(f"dim{d}", cfg),
                (f"dim{3 * d}",
                 dataclasses.replace(cfg, model=dataclasses.replace(
                     cfg.model, d=3 * d)))]
    raise CliError(f"unknown ablation axis {axis!r} "
                   "(choose topk|mp|channels|supervision|graphdim)")


def _run_setting(cfg: RunConfig, splits: dict, out: str, seed: int) -> float:
    """Train one seed of one setting; score = best-checkpoint unseen SR."""
    mcfg = _sync_model_cfg(cfg, splits)
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    result = train(splits, mcfg, tcfg, out_dir=out)
    model, _ = restore_model(result.best_path)
    agg, _ = evaluate(splits["val_unseen"], model, tcfg)
    return agg["SR"]


def cmd_ablate(cfg: RunConfig, axis: str, data_dir: str, out: str) -> int:
    splits = _load_splits(data_dir)
    _snapshot(cfg, out)
    rows = []
    for label, setting in _axis_settings(cfg, axis):
        srs = []
        for seed in cfg.seeds:
            run_dir = os.path.join(out, f"{label}_s{seed}")
            srs.append(_run_setting(setting, splits, run_dir, seed))
        rows.append({"setting": label, "seeds": list(cfg.seeds),
                     "sr": srs, "sr_mean": float(np.mean(srs)),
                     "sr_sd": float(np.std(srs)),
                     "sr_median": float(np.median(srs))})
    report = {"axis": axis, "rows": rows}
    if axis == "topk":
        med = [r["sr_median"] for r in rows]
        report["monotone"] = bool(med[0] <= med[1] <= med[2])
        report["spread"] = float(med[-1] - med[0])
    with open(os.path.join(out, "ablate.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    table = _format_table(report)
    with open(os.path.join(out, "ablate.txt"), "w") as fh:
        fh.write(table)
    print(table, end="")
    return 0


def _format_table(report: dict) -> str:
    lines = [f"axis: {report['axis']}",
             f"{'setting':<12} {'SR mean':>8} {'sd':>7} {'median':>7}  per-seed"]
    for r in report["rows"]:
        per = " ".join(f"{x:.3f}" for x in r["sr"])
        lines.append(f"{r['setting']:<12} {r['sr_mean']:>8.3f} "
                     f"{r['sr_sd']:>7.3f} {r['sr_median']:>7.3f}  [{per}]")
    if "monotone" in report:
        lines.append(f"monotone: {report['monotone']}  "
                     f"spread: {report['spread']:.3f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="graphnav",
        description="graph-memory navigation agents: data, training, eval")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config overriding defaults")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")

    g = sub.add_parser("gen", help="generate train/val splits")
    common(g)

    t = sub.add_parser("train", help="train a model on generated splits")
    common(t)
    t.add_argument("--data", required=True, help="directory from `gen`")
    t.add_argument("--resume", help="resume from a last.ckpt")

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(e)
    e.add_argument("--checkpoint", help="trained model checkpoint")
    e.add_argument("--data", required=True, help="episode dataset file")
    e.add_argument("--expert", action="store_true",
                   help="score the annotated routes instead of a model")
    e.add_argument("--budget", type=int, help="override decision budget")

    a = sub.add_parser("ablate", help="sweep one axis over several seeds")
    common(a)
    a.add_argument("--data", required=True, help="directory from `gen`")
    a.add_argument("--axis", required=True,
                   choices=["topk", "mp", "channels", "supervision", "graphdim"])
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.data = dataclasses.replace(cfg.data, seed=args.seed)
            cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
            cfg.seeds = [args.seed]
        out = args.out or cfg.out_dir
        if args.cmd == "gen":
            return cmd_gen(cfg, out)
        if args.cmd == "train":
            return cmd_train(cfg, args.data, out, resume=args.resume)
        if args.cmd == "eval":
            return cmd_eval(args.checkpoint, args.data, out,
                            expert=args.expert, budget=args.budget)
        if args.cmd == "ablate":
            return cmd_ablate(cfg, args.axis, args.data, out)
        raise CliError(f"unknown command {args.cmd!r}")
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # surface anything else with its type
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
