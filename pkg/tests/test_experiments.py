"""Preset tables, seeding, and the end-to-end run/summarize pipeline."""

import csv
import json
import math

import numpy as np
import pytest

from commlang.cli import main as cli_main
from commlang.experiments import (ExperimentConfig, PROFILES_HEADER,
                                  TURNS_HEADER, group_seed_seq,
                                  preset_conditions, run_preset, summarize)


def test_group_size_tables():
    desk = preset_conditions("group-size", "desk")
    assert [(c.group_size, c.n_groups, c.rounds) for c in desk] == [
        (2, 20, 100), (4, 10, 34), (8, 5, 15)]
    full = preset_conditions("group-size", "full")
    assert [(c.group_size, c.n_groups, c.rounds) for c in full] == [
        (2, 100, 100), (4, 50, 34), (8, 25, 15), (20, 10, 6)]
    assert all(c.group_size * c.n_groups == 200 for c in full)


def test_mixed_pairs_enumerates_the_five_partners():
    conds = preset_conditions("mixed-pairs", "full")
    assert len(conds) == 5
    assert all(c.grammars[0] == "50s+50m" for c in conds)
    assert [c.grammars[1] for c in conds] == [
        "50s+50m", "80s+20m", "20s+20m", "50s+80m", "80s+50m"]
    assert all(c.n_groups == 50 for c in conds)


def test_ablation_has_both_sigma_arms():
    conds = preset_conditions("selfplay-ablation", "full")
    assert [c.sigma for c in conds] == [10, math.inf]
    assert all(c.grammars == ("80s+20m", "20s+20m") for c in conds)
    assert all(c.n_groups == 20 for c in conds)


def test_selfplay_presets():
    rep = preset_conditions("selfplay-replication", "full")
    assert [c.grammars[0] for c in rep] == ["100s+67m", "50s+67m"]
    assert all(c.group_size == 1 and c.rounds == 60 for c in rep)
    assert all(c.profile == "replication" for c in rep)
    neutral = preset_conditions("selfplay-50m", "desk")
    assert [c.grammars[0] for c in neutral] == ["100s+50m", "50s+50m"]
    assert all(c.n_groups == 10 for c in neutral)
    ext = preset_conditions("pairs-extended", "desk")
    assert ext[0].rounds == 200


def test_unknown_preset_and_scale_rejected():
    with pytest.raises(ValueError):
        preset_conditions("nope", "desk")
    with pytest.raises(ValueError):
        preset_conditions("group-size", "huge")


def test_seed_scheme_is_stable_and_distinct():
    a = group_seed_seq(1, "size=2", 0)
    b = group_seed_seq(1, "size=2", 0)
    assert np.array_equal(a.generate_state(4), b.generate_state(4))
    others = [group_seed_seq(1, "size=2", 1), group_seed_seq(1, "size=8", 0),
              group_seed_seq(2, "size=2", 0)]
    for other in others:
        assert not np.array_equal(a.generate_state(4), other.generate_state(4))


@pytest.fixture(scope="module")
def micro_run(tmp_path_factory):
    """A tiny but complete run: one pair, two rounds, full pipeline."""
    out = tmp_path_factory.mktemp("runs") / "micro"
    cfg = ExperimentConfig(preset="mixed-pairs", out_dir=str(out), scale="desk",
                           master_seed=5, rounds=2, n_groups=2,
                           languages=("50s+50m",), workers=1)
    # keep only the control pairing to stay fast
    run_dir = run_preset(cfg)
    return run_dir


def test_run_layout_and_schemas(micro_run):
    manifest = json.loads((micro_run / "manifest.json").read_text())
    assert manifest["schema_version"] == "1"
    conds = manifest["conditions"]
    assert len(conds) == 1 and conds[0]["rounds"] == 2
    cond_dir = micro_run / conds[0]["name"]
    with open(cond_dir / "turns.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == TURNS_HEADER
    kinds = [r["kind"] for r in rows]
    assert kinds.count("init") == 4  # 2 agents x 2 groups
    assert kinds.count("inter") == 8  # 2 rounds x 2 edges x 2 groups
    for r in rows:
        if r["kind"] == "inter":
            assert 0.0 <= float(r["acc_inter"]) <= 1.0
    with open(cond_dir / "profiles.csv") as fh:
        prows = list(csv.DictReader(fh))
    assert list(prows[0].keys()) == PROFILES_HEADER
    assert {r["scope"] for r in prows} == {"agent", "group"}
    assert not (cond_dir / "parts").exists()
    ckpts = sorted((cond_dir / "checkpoints").iterdir())
    assert [p.name for p in ckpts] == ["g0000_a0.npz", "g0000_a1.npz",
                                       "g0001_a0.npz", "g0001_a1.npz"]


def test_summarize_aggregates(micro_run):
    summary = summarize(micro_run)
    cond = next(iter(summary["conditions"].values()))
    assert cond["n_agents"] == 4
    assert 0.0 <= cond["acc_self_turn0"] <= 1.0
    assert 0.0 <= cond["final_acc_inter_mean"] <= 1.0
    assert cond["group_size"] == 2 and cond["n_groups"] == 2
    assert len(cond["group_points"]) <= 2
    # re-summarizing is idempotent
    first = (micro_run / "summary.json").read_bytes()
    summarize(micro_run)
    assert (micro_run / "summary.json").read_bytes() == first


def test_runs_are_byte_identical_across_repeats(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"rep{k}"
        cfg = ExperimentConfig(preset="selfplay-50m", out_dir=str(out),
                               master_seed=9, rounds=2, n_groups=1,
                               languages=("50s+50m",), workers=1)
        run_preset(cfg)
        outs.append(out)
    for rel in ("lang=50s+50m/turns.csv", "lang=50s+50m/profiles.csv",
                "manifest.json"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_worker_fanout_does_not_change_results(tmp_path):
    outs = []
    for workers in (1, 2):
        out = tmp_path / f"w{workers}"
        run_preset(ExperimentConfig(preset="selfplay-50m", out_dir=str(out),
                                    master_seed=4, rounds=1, n_groups=2,
                                    languages=("100s+50m",), workers=workers))
        outs.append(out)
    for rel in ("lang=100s+50m/turns.csv", "lang=100s+50m/profiles.csv"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_override_validation():
    cfg = ExperimentConfig(preset="group-size", out_dir="x", sizes=(64,))
    with pytest.raises(ValueError):
        run_preset(cfg)


def test_summarize_rejects_non_run_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        summarize(tmp_path)


def test_cli_dataset_and_summarize(tmp_path, micro_run, capsys):
    out = tmp_path / "d.txt"
    assert cli_main(["dataset", "--grammar", "50s+50m", "--seed", "3",
                     "--out", str(out)]) == 0
    assert out.exists()
    assert "480 supervised pairs" in capsys.readouterr().out
    assert cli_main(["summarize", str(micro_run)]) == 0
    assert "final_acc_inter_mean" in capsys.readouterr().out


def test_cli_report_writes_summary_and_figures_when_available(micro_run, capsys):
    assert cli_main(["report", str(micro_run)]) == 0
    assert (micro_run / "summary.json").exists()
    out = capsys.readouterr().out
    try:
        import plotviz  # noqa: F401
    except ImportError:
        assert "summary.json" in out
    else:
        for kind in ("success-curve", "preference-scatter", "group-scatter"):
            assert (micro_run / f"{kind}.png").exists(), kind


def test_cli_parser_rejects_unknown_preset():
    with pytest.raises(SystemExit):
        cli_main(["run", "--preset", "bogus", "--out", "x"])
