"""Group communication: connectivity graph, rounds, and turn scheduling.

A round visits every edge of the connectivity graph once in shuffled
order; after each interactive turn, any participant whose activation
counter has reached the self-play threshold plays one turn with itself
and resets the counter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import (acc_inter, acc_self, greedy_productions, group_profile,
                      profile_from_productions)
from .training import RlConfig, inter_turn, self_turn


@dataclass(frozen=True)
class ConnectivityGraph:
    """Directed edges licensing speaker -> listener interaction."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        node_set = set(self.nodes)
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop edge ({i}, {j})")
            if i not in node_set or j not in node_set:
                raise ValueError(f"edge ({i}, {j}) references unknown node")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))


def complete_graph(n: int) -> ConnectivityGraph:
    """All ordered pairs of n agents; n*(n-1) edges."""
    if n < 2:
        raise ValueError("a communication graph needs at least 2 agents")
    nodes = tuple(range(n))
    edges = tuple((i, j) for i in nodes for j in nodes if i != j)
    return ConnectivityGraph(nodes=nodes, edges=edges)


def comm_rounds_for(group_size: int) -> int:
    """Rounds that give every agent about 200 interactive participations."""
    if group_size < 2:
        raise ValueError("group size must be at least 2")
    return math.ceil(100 / (group_size - 1))


@dataclass(frozen=True)
class ScheduleConfig:
    n_rounds: int
    sigma: float = 10  # self-play threshold; math.inf disables self-play


def run_round(agents, g: ConnectivityGraph, cfg: ScheduleConfig,
              rng: np.random.Generator, inter, self_play):
    """One shuffled pass over all edges with self-play interleaving.

    ``inter(speaker, listener)`` and ``self_play(agent)`` perform the turns;
    this function owns only the ordering and the activation bookkeeping.
    """
    order = rng.permutation(len(g.edges))
    for k in order:
        i, j = g.edges[k]
        inter(agents[i], agents[j])
        for a in (agents[i], agents[j]):
            if a.activation >= cfg.sigma:
                self_play(a)
                a.activation = 0


class MetricsSink:
    """Receives evaluation snapshots; subclasses persist them."""

    def turn(self, round_: int, turn: int, kind: str, speaker_id: int,
             listener_id: int, acc_i: float, acc_s_spk: float, acc_s_lst: float):
        pass

    def profile(self, round_: int, turn: int, scope: str, agent_id,
                prof) -> None:
        pass


def run_group(agents, g: ConnectivityGraph, cfg: ScheduleConfig, datasets,
              rl_cfg: RlConfig, sink: MetricsSink, rng: np.random.Generator,
              eval_meanings=None):
    """Run a full schedule with per-turn evaluation snapshots.

    ``datasets`` holds one dataset per agent (the speaker's pool supplies
    each turn's meanings); evaluation uses the shared held-out meanings.
    Every executed turn writes a row with the edge's interactive success and
    both participants' self-understanding, plus their production profiles;
    a pooled group profile is written at the end of every round.
    """
    datasets = list(datasets)
    if len(datasets) != len(agents):
        raise ValueError("need exactly one dataset per agent")
    if eval_meanings is None:
        eval_meanings = list(datasets[0].test)
    by_id = {id(a): k for k, a in enumerate(agents)}
    turn_no = 0

    def snapshot(round_, kind, spk, lst):
        prods_spk = greedy_productions(spk, eval_meanings)
        a_self_spk = acc_self(spk, eval_meanings, productions=prods_spk)
        sink.profile(round_, turn_no, "agent", spk.id,
                     profile_from_productions(zip(eval_meanings, prods_spk)))
        if lst is spk:
            sink.turn(round_, turn_no, kind, spk.id, lst.id,
                      a_self_spk, a_self_spk, a_self_spk)
            return
        a_int = acc_inter(spk, lst, eval_meanings, productions=prods_spk)
        prods_lst = greedy_productions(lst, eval_meanings)
        a_self_lst = acc_self(lst, eval_meanings, productions=prods_lst)
        sink.profile(round_, turn_no, "agent", lst.id,
                     profile_from_productions(zip(eval_meanings, prods_lst)))
        sink.turn(round_, turn_no, kind, spk.id, lst.id,
                  a_int, a_self_spk, a_self_lst)

    def do_inter(spk, lst):
        nonlocal turn_no
        turn_no += 1
        inter_turn(spk, lst, datasets[by_id[id(spk)]], rl_cfg, rng)
        snapshot(current_round, "inter", spk, lst)

    def do_self(a):
        nonlocal turn_no
        turn_no += 1
        self_turn(a, datasets[by_id[id(a)]], rl_cfg, rng)
        snapshot(current_round, "self", a, a)

    current_round = 0
    for a in agents:
        snapshot(0, "init", a, a)
    sink.profile(0, 0, "group", None, group_profile(agents, eval_meanings))

    for current_round in range(1, cfg.n_rounds + 1):
        run_round(agents, g, cfg, rng, do_inter, do_self)
        sink.profile(current_round, turn_no, "group", None,
                     group_profile(agents, eval_meanings))


def run_selfplay(a, dataset, n_turns: int, rl_cfg: RlConfig, sink: MetricsSink,
                 rng: np.random.Generator, eval_meanings=None):
    """Self-play-only schedule for a lone agent (no connectivity graph)."""
    if eval_meanings is None:
        eval_meanings = list(dataset.test)

    def snapshot(t):
        prods = greedy_productions(a, eval_meanings)
        acc = acc_self(a, eval_meanings, productions=prods)
        sink.turn(t, t, "init" if t == 0 else "self", a.id, a.id, acc, acc, acc)
        sink.profile(t, t, "agent", a.id,
                     profile_from_productions(zip(eval_meanings, prods)))

    snapshot(0)
    for t in range(1, n_turns + 1):
        self_turn(a, dataset, rl_cfg, rng)
        snapshot(t)
