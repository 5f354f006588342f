"""Config parsing and the command-line surface."""

import json
import os

import pytest
import yaml

from graphnav.cli import main
from graphnav.config import (ConfigError, RunConfig, config_from_dict,
                             load_config, save_config_snapshot)

TINY = {
    "data": {"world": {"n_nodes": 16, "vocab": 5, "noise": 0.05},
             "n_worlds_seen": 2, "n_worlds_unseen": 1,
             "n_train": 4, "n_val_seen": 2, "n_val_unseen": 2,
             "mode": "shortest", "seed": 0},
    "model": {"d_emb": 4, "d": 8, "d_h": 8,
              "planner": {"proxy_size": 3, "pool_dim": 4, "pool_rounds": 1,
                          "plan_dim": 8, "plan_rounds": 1, "n_channels": 1}},
    "train": {"lr": 1e-3, "epochs": 1, "forcing": "expert", "budget": 8,
              "seed": 0},
    "seeds": [0],
}


@pytest.fixture
def tiny_cfg_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return str(path)


# ---------------------------------------------------------------- config

def test_defaults_match_documented_values():
    cfg = RunConfig()
    assert cfg.model.planner.top_k == 16
    assert cfg.model.planner.plan_rounds == 3
    assert cfg.model.planner.n_channels == 3
    assert cfg.model.d == 256
    assert cfg.train.lr == 1e-4
    assert cfg.seeds == [0, 1, 2]


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        config_from_dict({"bogus": 1})


def test_unknown_nested_key_reports_full_path():
    with pytest.raises(ConfigError, match=r"train\.lrr"):
        config_from_dict({"train": {"lrr": 0.1}})
    with pytest.raises(ConfigError, match=r"model\.planner\.topk"):
        config_from_dict({"model": {"planner": {"topk": 2}}})
    with pytest.raises(ConfigError, match=r"data\.world\.nodes"):
        config_from_dict({"data": {"world": {"nodes": 9}}})


def test_invalid_value_reports_section():
    with pytest.raises(ConfigError, match="train"):
        config_from_dict({"train": {"forcing": "telepathy"}})


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert load_config(str(p)) == RunConfig()
    assert load_config(None) == RunConfig()


def test_missing_config_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/cfg.yaml")


def test_snapshot_roundtrip(tmp_path, tiny_cfg_file):
    cfg = load_config(tiny_cfg_file)
    snap = tmp_path / "snap.yaml"
    save_config_snapshot(cfg, str(snap))
    assert load_config(str(snap)) == cfg


def test_hop_range_from_yaml_list():
    cfg = config_from_dict({"data": {"hop_range": [2, 4]}})
    assert cfg.data.hop_range == (2, 4)


# ---------------------------------------------------------------- commands

def gen(cfg_file, out, extra=()):
    return main(["gen", "--config", cfg_file, "--out", out, *extra])


def test_gen_is_byte_deterministic(tiny_cfg_file, tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert gen(tiny_cfg_file, a) == 0
    assert gen(tiny_cfg_file, b) == 0
    for fname in ("train.jsonl", "val_seen.jsonl", "val_unseen.jsonl"):
        fa = (tmp_path / "a" / fname).read_bytes()
        fb = (tmp_path / "b" / fname).read_bytes()
        assert fa == fb, fname
    assert (tmp_path / "a" / "config.yaml").exists()


def test_gen_seed_override_changes_data(tiny_cfg_file, tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    gen(tiny_cfg_file, a)
    gen(tiny_cfg_file, b, extra=["--seed", "5"])
    assert ((tmp_path / "a" / "train.jsonl").read_bytes()
            != (tmp_path / "b" / "train.jsonl").read_bytes())


def test_eval_expert_routes_are_perfect(tiny_cfg_file, tmp_path):
    data = str(tmp_path / "data")
    gen(tiny_cfg_file, data)
    out = str(tmp_path / "eval")
    rc = main(["eval", "--config", tiny_cfg_file, "--expert",
               "--data", os.path.join(data, "val_unseen.jsonl"), "--out", out])
    assert rc == 0
    lines = [json.loads(l) for l in
             (tmp_path / "eval" / "eval.jsonl").read_text().splitlines()]
    summary = lines[-1]["summary"]
    assert summary["SR"] == 1.0
    assert summary["nDTW"] == 1.0


def test_train_then_eval_cycle(tiny_cfg_file, tmp_path):
    data = str(tmp_path / "data")
    gen(tiny_cfg_file, data)
    run = str(tmp_path / "run")
    assert main(["train", "--config", tiny_cfg_file, "--data", data,
                 "--out", run]) == 0
    assert os.path.exists(os.path.join(run, "best.ckpt"))
    assert os.path.exists(os.path.join(run, "metrics.jsonl"))
    assert os.path.exists(os.path.join(run, "config.yaml"))
    out = str(tmp_path / "ev")
    rc = main(["eval", "--checkpoint", os.path.join(run, "best.ckpt"),
               "--data", os.path.join(data, "val_unseen.jsonl"), "--out", out])
    assert rc == 0
    rows = [json.loads(l) for l in
            (tmp_path / "ev" / "eval.jsonl").read_text().splitlines()]
    assert "summary" in rows[-1]
    assert len(rows) == 3   # two episodes + summary


def test_train_rerun_reproduces_metrics_log(tiny_cfg_file, tmp_path):
    data = str(tmp_path / "data")
    gen(tiny_cfg_file, data)
    a, b = str(tmp_path / "ra"), str(tmp_path / "rb")
    main(["train", "--config", tiny_cfg_file, "--data", data, "--out", a])
    main(["train", "--config", tiny_cfg_file, "--data", data, "--out", b])
    assert ((tmp_path / "ra" / "metrics.jsonl").read_bytes()
            == (tmp_path / "rb" / "metrics.jsonl").read_bytes())


def test_missing_data_dir_fails_with_diagnostic(tiny_cfg_file, tmp_path, capsys):
    rc = main(["train", "--config", tiny_cfg_file,
               "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert rc != 0
    assert "missing dataset" in capsys.readouterr().err


def test_bad_config_key_fails(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"trian": {"lr": 1.0}}))
    rc = main(["gen", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "trian" in capsys.readouterr().err


def test_missing_checkpoint_fails(tiny_cfg_file, tmp_path, capsys):
    data = str(tmp_path / "data")
    gen(tiny_cfg_file, data)
    rc = main(["eval", "--checkpoint", str(tmp_path / "no.ckpt"),
               "--data", os.path.join(data, "val_unseen.jsonl"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "checkpoint" in capsys.readouterr().err


def test_unknown_axis_rejected_by_parser(tiny_cfg_file, tmp_path):
    with pytest.raises(SystemExit):
        main(["ablate", "--config", tiny_cfg_file, "--axis", "magic",
              "--data", str(tmp_path), "--out", str(tmp_path / "o")])


def test_ablate_mp_axis_produces_table(tiny_cfg_file, tmp_path):
    data = str(tmp_path / "data")
    gen(tiny_cfg_file, data)
    out = str(tmp_path / "ab")
    rc = main(["ablate", "--config", tiny_cfg_file, "--axis", "mp",
               "--data", data, "--out", out])
    assert rc == 0
    report = json.loads((tmp_path / "ab" / "ablate.json").read_text())
    assert report["axis"] == "mp"
    assert [r["setting"] for r in report["rows"]] == ["mp0", "mp3"]
    for row in report["rows"]:
        assert set(row) >= {"sr", "sr_mean", "sr_sd", "sr_median"}
        assert len(row["sr"]) == 1          # one seed in the tiny config
    table = (tmp_path / "ab" / "ablate.txt").read_text()
    assert "mp0" in table and "mp3" in table


def test_ablate_topk_reports_monotonicity_flag(tiny_cfg_file, tmp_path):
    data = str(tmp_path / "data")
    gen(tiny_cfg_file, data)
    out = str(tmp_path / "abk")
    rc = main(["ablate", "--config", tiny_cfg_file, "--axis", "topk",
               "--data", data, "--out", out])
    assert rc == 0
    report = json.loads((tmp_path / "abk" / "ablate.json").read_text())
    assert "monotone" in report and "spread" in report
    assert [r["setting"] for r in report["rows"]] == ["topk2", "topk4", "topk16"]
