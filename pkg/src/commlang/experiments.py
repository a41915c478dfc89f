"""Experiment presets, deterministic fan-out over groups, and run summaries.

A run directory holds one subdirectory per condition with merged
``turns.csv`` and ``profiles.csv``, agent checkpoints, plus a top-level
``manifest.json``; ``summarize`` reduces the CSVs to per-condition
aggregates including the group-level trade-off correlation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing
import shutil
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics
from .agent import new_agent, save_agent
from .lang import GrammarSpec, build_dataset
from .population import (MetricsSink, ScheduleConfig, comm_rounds_for,
                         complete_graph, run_group, run_selfplay)
from .training import RlConfig, SlConfig, sl_train

SCHEMA_VERSION = "1"

TURNS_HEADER = ["group", "round", "turn", "kind", "speaker", "listener",
                "acc_inter", "acc_self_spk", "acc_self_lst"]
PROFILES_HEADER = ["group", "round", "turn", "scope", "agent", "n_total",
                   "n_classifiable", "p_sov", "p_marker", "p_marker_given_sov",
                   "p_marker_given_osv", "order_entropy", "mean_length"]

PRESETS = ("selfplay-replication", "selfplay-50m", "mixed-pairs",
           "selfplay-ablation", "group-size", "pairs-extended")


@dataclass(frozen=True)
class Condition:
    """One experimental cell: a population make-up and its schedule."""

    name: str
    grammars: tuple[str, ...]
    group_size: int
    n_groups: int
    rounds: int  # communication rounds, or self-play turns for lone agents
    sigma: float
    profile: str
    mode: str  # "group" | "selfplay"


@dataclass
class ExperimentConfig:
    preset: str
    out_dir: str
    scale: str = "desk"
    master_seed: int = 1
    sigma: float | None = None
    rounds: int | None = None
    n_groups: int | None = None
    sizes: tuple[int, ...] | None = None
    languages: tuple[str, ...] | None = None
    workers: int = 1
    precision: str = "f64"


def preset_conditions(preset: str, scale: str) -> list[Condition]:
    """The paper-derived condition tables at desk or full scale."""
    if scale not in ("desk", "full"):
        raise ValueError(f"unknown scale {scale!r}")
    full = scale == "full"
    if preset in ("selfplay-replication", "selfplay-50m"):
        marker = "67m" if preset == "selfplay-replication" else "50m"
        n = 50 if full else 10
        return [Condition(name=f"lang={g}", grammars=(g,), group_size=1,
                          n_groups=n, rounds=60, sigma=math.inf,
                          profile="replication", mode="selfplay")
                for g in (f"100s+{marker}", f"50s+{marker}")]
    if preset == "mixed-pairs":
        n = 50 if full else 10
        return [Condition(name=f"pair=50s+50m~{other}",
                          grammars=("50s+50m", other), group_size=2, n_groups=n,
                          rounds=100, sigma=10, profile="interactive", mode="group")
                for other in ("50s+50m", "80s+20m", "20s+20m", "50s+80m", "80s+50m")]
    if preset == "selfplay-ablation":
        n = 20 if full else 10
        return [Condition(name=f"sigma={label}", grammars=("80s+20m", "20s+20m"),
                          group_size=2, n_groups=n, rounds=100, sigma=sigma,
                          profile="interactive", mode="group")
                for label, sigma in (("10", 10), ("inf", math.inf))]
    if preset == "group-size":
        sizes = (2, 4, 8, 20) if full else (2, 4, 8)
        agents_total = 200 if full else 40
        return [Condition(name=f"size={n}", grammars=("50s+50m",) * n,
                          group_size=n, n_groups=agents_total // n,
                          rounds=comm_rounds_for(n), sigma=10,
                          profile="interactive", mode="group")
                for n in sizes]
    if preset == "pairs-extended":
        n = 100 if full else 10
        return [Condition(name="size=2-200rounds", grammars=("50s+50m", "50s+50m"),
                          group_size=2, n_groups=n, rounds=200, sigma=10,
                          profile="interactive", mode="group")]
    raise ValueError(f"unknown preset {preset!r} (expected one of {PRESETS})")


def _apply_overrides(conditions: list[Condition], cfg: ExperimentConfig) -> list[Condition]:
    out = []
    for c in conditions:
        if cfg.sizes is not None and c.group_size not in cfg.sizes:
            continue
        if cfg.languages is not None and not set(c.grammars) <= set(cfg.languages):
            continue
        if cfg.sigma is not None and c.mode == "group":
            c = replace(c, sigma=cfg.sigma)
        if cfg.rounds is not None:
            c = replace(c, rounds=cfg.rounds)
        if cfg.n_groups is not None:
            c = replace(c, n_groups=cfg.n_groups)
        out.append(c)
    if not out:
        raise ValueError("overrides filtered out every condition")
    return out


def _condition_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def group_seed_seq(master_seed: int, condition: str, group_idx: int) -> np.random.SeedSequence:
    """Stable worker seed: (master seed, sha256(condition)[:4], group index)."""
    return np.random.SeedSequence(master_seed,
                                  spawn_key=(_condition_key(condition), group_idx))


def _fmt(x) -> str:
    return "" if x is None else format(x, ".6f")


class CsvSink(MetricsSink):
    """Streams snapshot rows for one group into its part files."""

    def __init__(self, group_idx: int, turns_path: Path, profiles_path: Path):
        self.group_idx = group_idx
        self._turns = open(turns_path, "w", newline="", encoding="utf-8")
        self._profiles = open(profiles_path, "w", newline="", encoding="utf-8")
        self._tw = csv.writer(self._turns)
        self._pw = csv.writer(self._profiles)

    def turn(self, round_, turn, kind, speaker_id, listener_id,
             acc_i, acc_s_spk, acc_s_lst):
        self._tw.writerow([self.group_idx, round_, turn, kind, speaker_id,
                           listener_id, _fmt(acc_i), _fmt(acc_s_spk), _fmt(acc_s_lst)])

    def profile(self, round_, turn, scope, agent_id, prof):
        self._pw.writerow([self.group_idx, round_, turn, scope,
                           "" if agent_id is None else agent_id,
                           prof.n_total, prof.n_classifiable,
                           _fmt(prof.p_sov), _fmt(prof.p_marker),
                           _fmt(prof.p_marker_given_sov), _fmt(prof.p_marker_given_osv),
                           _fmt(prof.order_entropy), _fmt(prof.mean_length)])

    def close(self):
        self._turns.close()
        self._profiles.close()


def run_condition_group(cond: Condition, group_idx: int, master_seed: int,
                        cond_dir: Path, precision: str) -> Path:
    """Train and run one group end to end; returns its part directory."""
    dtype = np.float64 if precision == "f64" else np.float32
    ss = group_seed_seq(master_seed, cond.name, group_idx)
    data_ss, init_ss, sl_ss, sched_ss = ss.spawn(4)
    dataset_seed = int(data_ss.generate_state(1)[0])
    datasets = [build_dataset(GrammarSpec.parse(g), dataset_seed, cond.profile)
                for g in cond.grammars]

    n = cond.group_size
    agents = [new_agent(k, np.random.default_rng(child), dtype)
              for k, child in enumerate(init_ss.spawn(n))]
    for agent_obj, d, child in zip(agents, datasets, sl_ss.spawn(n)):
        sl_train(agent_obj, d, SlConfig(), np.random.default_rng(child))

    part_dir = cond_dir / "parts" / f"g{group_idx:04d}"
    part_dir.mkdir(parents=True, exist_ok=True)
    sink = CsvSink(group_idx, part_dir / "turns.csv", part_dir / "profiles.csv")
    sched_rng = np.random.default_rng(sched_ss)
    try:
        if cond.mode == "selfplay":
            run_selfplay(agents[0], datasets[0], cond.rounds, RlConfig(),
                         sink, sched_rng)
        else:
            run_group(agents, complete_graph(n),
                      ScheduleConfig(n_rounds=cond.rounds, sigma=cond.sigma),
                      datasets, RlConfig(), sink, sched_rng)
    finally:
        sink.close()

    ckpt_dir = cond_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    for k, agent_obj in enumerate(agents):
        save_agent(agent_obj, ckpt_dir / f"g{group_idx:04d}_a{k}.npz")
    return part_dir


def _job(args):
    return run_condition_group(*args)


def _merge_parts(cond_dir: Path, n_groups: int):
    for name, header in (("turns.csv", TURNS_HEADER), ("profiles.csv", PROFILES_HEADER)):
        with open(cond_dir / name, "w", newline="", encoding="utf-8") as out:
            out.write(",".join(header) + "\n")
            for gi in range(n_groups):
                part = cond_dir / "parts" / f"g{gi:04d}" / name
                out.write(part.read_text(encoding="utf-8"))
    shutil.rmtree(cond_dir / "parts")


def _manifest(cfg: ExperimentConfig, conditions: list[Condition]) -> dict:
    from . import __version__

    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "preset": cfg.preset,
        "scale": cfg.scale,
        "master_seed": cfg.master_seed,
        "precision": cfg.precision,
        "seed_scheme": "SeedSequence(master_seed, spawn_key=(sha256(condition)[:4], group_index))",
        "files": {"turns.csv": TURNS_HEADER, "profiles.csv": PROFILES_HEADER},
        "conditions": [_condition_dict(c) for c in conditions],
    }


def _condition_dict(c: Condition) -> dict:
    d = asdict(c)
    d["grammars"] = list(c.grammars)
    d["sigma"] = "inf" if math.isinf(c.sigma) else c.sigma
    return d


def run_preset(cfg: ExperimentConfig) -> Path:
    """Run every group of every condition; returns the run directory."""
    conditions = _apply_overrides(preset_conditions(cfg.preset, cfg.scale), cfg)
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_manifest(cfg, conditions), fh, indent=1, sort_keys=True)
        fh.write("\n")

    jobs = []
    for cond in conditions:
        cond_dir = run_dir / cond.name
        cond_dir.mkdir(parents=True, exist_ok=True)
        for gi in range(cond.n_groups):
            jobs.append((cond, gi, cfg.master_seed, cond_dir, cfg.precision))

    if cfg.workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(cfg.workers) as pool:
            pool.map(_job, jobs, chunksize=1)
    else:
        for job in jobs:
            _job(job)

    for cond in conditions:
        _merge_parts(run_dir / cond.name, cond.n_groups)
    return run_dir


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _mean_std(values) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _opt_float(s: str) -> float | None:
    return float(s) if s else None


def summarize(run_dir) -> dict:
    """Aggregate a finished run into per-condition summary statistics."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{run_dir} is not a run directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    summary = {"preset": manifest["preset"], "scale": manifest["scale"],
               "master_seed": manifest["master_seed"],
               "schema_version": manifest["schema_version"], "conditions": {}}
    for cond in manifest["conditions"]:
        cond_dir = run_dir / cond["name"]
        turns = _read_csv(cond_dir / "turns.csv")
        profiles = _read_csv(cond_dir / "profiles.csv")
        if not turns or not profiles:
            raise ValueError(f"incomplete run: empty CSVs under {cond_dir}")
        summary["conditions"][cond["name"]] = _summarize_condition(cond, turns, profiles)
    out_path = run_dir / "summary.json"
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return summary


def _summarize_condition(cond: dict, turns: list[dict], profiles: list[dict]) -> dict:
    turn0_self: list[float] = []
    last_self: dict[tuple[str, str], float] = {}
    last_round_by_group: dict[str, int] = {}
    for row in turns:
        last_round_by_group[row["group"]] = max(
            last_round_by_group.get(row["group"], 0), int(row["round"]))
    final_inter: dict[str, list[float]] = {}
    for row in turns:
        acc_i = _opt_float(row["acc_inter"])
        a_spk = _opt_float(row["acc_self_spk"])
        a_lst = _opt_float(row["acc_self_lst"])
        if row["kind"] == "init" and a_spk is not None:
            turn0_self.append(a_spk)
        if a_spk is not None:
            last_self[(row["group"], row["speaker"])] = a_spk
        if a_lst is not None:
            last_self[(row["group"], row["listener"])] = a_lst
        if (row["kind"] == "inter" and acc_i is not None
                and int(row["round"]) == last_round_by_group[row["group"]]):
            final_inter.setdefault(row["group"], []).append(acc_i)

    agent_rows: dict[tuple[str, str], dict] = {}
    group_rows: dict[str, dict] = {}
    for row in profiles:
        if row["scope"] == "agent":
            agent_rows[(row["group"], row["agent"])] = row
        else:
            group_rows[row["group"]] = row

    agent_final = list(agent_rows.values())
    per_group_inter = [float(np.mean(v)) for v in final_inter.values()] or [None]

    group_points = []
    for row in group_rows.values():
        ent, mk = _opt_float(row["order_entropy"]), _opt_float(row["p_marker"])
        if ent is not None and mk is not None:
            group_points.append((ent, mk))
    rho_group = None
    if len(group_points) >= 2:
        rho = metrics.spearman_rho([p[0] for p in group_points],
                                   [p[1] for p in group_points])
        rho_group = None if math.isnan(rho) else rho
    agent_points = [(e, m) for e, m in
                    ((_opt_float(r["order_entropy"]), _opt_float(r["p_marker"]))
                     for r in agent_final) if e is not None and m is not None]
    rho_agents = None
    if len(agent_points) >= 2:
        rho = metrics.spearman_rho([p[0] for p in agent_points],
                                   [p[1] for p in agent_points])
        rho_agents = None if math.isnan(rho) else rho

    self_mean, self_std = _mean_std(last_self.values())
    inter_mean, inter_std = _mean_std(per_group_inter)
    out = {
        "group_size": cond["group_size"],
        "n_groups": cond["n_groups"],
        "rounds": cond["rounds"],
        "sigma": cond["sigma"],
        "n_agents": len(agent_final),
        "acc_self_turn0": _mean_std(turn0_self)[0],
        "final_acc_self_mean": self_mean,
        "final_acc_self_std": self_std,
        "final_acc_inter_mean": inter_mean,
        "final_acc_inter_std": inter_std,
        "rho_group": rho_group,
        "rho_agents": rho_agents,
        "group_points": [[round(e, 6), round(m, 6)] for e, m in sorted(group_points)],
    }
    for col in ("p_sov", "p_marker", "p_marker_given_sov", "p_marker_given_osv",
                "order_entropy", "mean_length"):
        mean, std = _mean_std(_opt_float(r[col]) for r in agent_final)
        out[f"final_{col}_mean"] = mean
        out[f"final_{col}_std"] = std
    return out
