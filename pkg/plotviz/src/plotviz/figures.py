"""Render communication-run figures from the CSV/JSON outputs alone.

The input contract is the run directory written by the simulation CLI:
``manifest.json`` (carries the schema version and condition table),
per-condition ``turns.csv`` and ``profiles.csv``, and ``summary.json``
for the aggregate annotations.  Nothing here imports the simulator.
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMA = "1"

KINDS = ("success-curve", "preference-scatter", "group-scatter")

TURNS_COLUMNS = {"group", "round", "turn", "kind", "speaker", "listener",
                 "acc_inter", "acc_self_spk", "acc_self_lst"}
PROFILES_COLUMNS = {"group", "round", "turn", "scope", "agent", "n_total",
                    "n_classifiable", "p_sov", "p_marker", "order_entropy",
                    "mean_length"}

# Pinned style so regenerating a figure reproduces it exactly.
STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "legend.frameon": False,
    "svg.hashsalt": "plotviz",
}

_GRAMMAR = re.compile(r"^(\d{1,3})s\+(\d{1,3})m$")


class RunDataError(ValueError):
    """The run directory does not satisfy the documented schema."""


def _read_json(path: Path) -> dict:
    if not path.exists():
        raise RunDataError(f"missing {path.name} in {path.parent}")
    return json.loads(path.read_text(encoding="utf-8"))


def _read_rows(path: Path, required: set[str]) -> list[dict]:
    if not path.exists():
        raise RunDataError(f"missing {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        missing = required - header
        if missing:
            raise RunDataError(f"{path} lacks columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise RunDataError(f"{path} has no data rows")
    return rows


def _grammar_point(name: str) -> tuple[float, float]:
    """(order entropy, marker proportion) of an initial grammar name."""
    m = _GRAMMAR.match(name)
    if m is None:
        raise RunDataError(f"bad grammar name {name!r}")
    p_sov = int(m.group(1)) / 100.0
    p_marker = int(m.group(2)) / 100.0
    if p_sov in (0.0, 1.0):
        ent = 0.0
    else:
        ent = -(p_sov * math.log2(p_sov) + (1 - p_sov) * math.log2(1 - p_sov))
    return ent, p_marker


def _load_manifest(run_dir: Path) -> dict:
    manifest = _read_json(run_dir / "manifest.json")
    version = manifest.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise RunDataError(f"unsupported schema version {version!r} "
                           f"(expected {SUPPORTED_SCHEMA!r})")
    return manifest


def _float(row, col):
    return float(row[col]) if row[col] != "" else None


def _success_series(turns: list[dict]) -> dict:
    """Per-group interactive and self success, aligned on turn ordinals."""
    by_group: dict[str, list[dict]] = {}
    for row in turns:
        by_group.setdefault(row["group"], []).append(row)
    inter, self_ = [], []
    for rows in by_group.values():
        rows = sorted(rows, key=lambda r: int(r["turn"]))
        gi = [_float(r, "acc_inter") for r in rows if r["kind"] == "inter"]
        gs = [np.mean([_float(r, "acc_self_spk"), _float(r, "acc_self_lst")])
              for r in rows if r["kind"] != "init"]
        if gi:
            inter.append(gi)
        self_.append(gs)
    return {"inter": _stack(inter), "self": _stack(self_)}


def _stack(series: list[list]) -> tuple[np.ndarray, np.ndarray] | None:
    if not series:
        return None
    length = min(len(s) for s in series)
    arr = np.asarray([s[:length] for s in series], dtype=np.float64)
    return arr.mean(axis=0), arr.std(axis=0)


def _final_agent_points(profiles: list[dict]) -> list[tuple[float, float]]:
    last: dict[tuple[str, str], dict] = {}
    for row in profiles:
        if row["scope"] == "agent":
            last[(row["group"], row["agent"])] = row
    return _points(last.values())


def _final_group_points(profiles: list[dict]) -> list[tuple[float, float]]:
    last: dict[str, dict] = {}
    for row in profiles:
        if row["scope"] == "group":
            last[row["group"]] = row
    return _points(last.values())


def _points(rows) -> list[tuple[float, float]]:
    out = []
    for row in rows:
        ent, mk = _float(row, "order_entropy"), _float(row, "p_marker")
        if ent is not None and mk is not None:
            out.append((ent, mk))
    return out


def _scatter_axes(ax, points, grammars, title, rho=None):
    if points:
        xs, ys = zip(*points)
        ax.scatter(xs, ys, s=28, facecolors="none", edgecolors="tab:blue",
                   linewidths=1.0, zorder=3)
        ax.errorbar([np.mean(xs)], [np.mean(ys)],
                    xerr=[np.std(xs)], yerr=[np.std(ys)],
                    fmt="o", color="tab:blue", capsize=3, zorder=4)
    for g in grammars:
        ax.scatter(*_grammar_point(g), marker="D", s=46, color="black", zorder=5)
    if rho is not None:
        ax.text(0.04, 0.04, f"rho = {rho:.4f}", transform=ax.transAxes)
    ax.set_xlim(-0.04, 1.04)
    ax.set_ylim(-0.04, 1.04)
    ax.set_xlabel("order entropy (bits)")
    ax.set_ylabel("marker proportion")
    ax.set_title(title)


def plot(run_dir, kind: str, out_path) -> Path:
    """Render one figure kind from a finished run; returns the output path.

    All inputs are validated before the file is created, so a bad run
    directory never leaves a partial image behind.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown figure kind {kind!r} (expected one of {KINDS})")
    run_dir = Path(run_dir)
    out_path = Path(out_path)
    manifest = _load_manifest(run_dir)
    conditions = manifest["conditions"]

    loaded = []
    for cond in conditions:
        cond_dir = run_dir / cond["name"]
        if kind == "success-curve":
            data = _success_series(_read_rows(cond_dir / "turns.csv", TURNS_COLUMNS))
        else:
            profiles = _read_rows(cond_dir / "profiles.csv", PROFILES_COLUMNS)
            if kind == "preference-scatter":
                data = _final_agent_points(profiles)
            else:
                data = _final_group_points(profiles)
        loaded.append((cond, data))

    rhos = {}
    if kind == "group-scatter":
        summary = _read_json(run_dir / "summary.json")
        for cond in conditions:
            rhos[cond["name"]] = summary["conditions"][cond["name"]].get("rho_group")

    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(loaded),
                                 figsize=(3.4 * len(loaded), 3.2),
                                 squeeze=False)
        for ax, (cond, data) in zip(axes[0], loaded):
            if kind == "success-curve":
                _curve_axes(ax, data, cond["name"])
            elif kind == "preference-scatter":
                _scatter_axes(ax, data, cond["grammars"], cond["name"])
            else:
                _scatter_axes(ax, data, cond["grammars"], cond["name"],
                              rho=rhos[cond["name"]])
        fig.tight_layout()
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out_path)
        plt.close(fig)
    return out_path


def _curve_axes(ax, series, title):
    for label, color in (("inter", "tab:blue"), ("self", "tab:orange")):
        stacked = series[label]
        if stacked is None:
            continue
        mean, std = stacked
        xs = np.arange(1, len(mean) + 1)
        ax.plot(xs, mean, color=color, label=label)
        ax.fill_between(xs, mean - std, mean + std, color=color, alpha=0.2)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("turn")
    ax.set_ylabel("communication success")
    ax.set_title(title)
    ax.legend(loc="lower right")
