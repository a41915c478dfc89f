"""Evaluation quantities: communication success, production preferences,
utterance effort, and the rank correlation used for the group trade-off."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lang
from .agent import Agent, listen_batch, speak_batch
from .tensor import no_grad


def exact_match(m: lang.Meaning, m_hat: lang.Meaning) -> int:
    """1 iff action, agent and patient all match."""
    return int(m == m_hat)


def greedy_productions(a: Agent, meanings) -> list[tuple[int, ...]]:
    with no_grad():
        utts, _, _ = speak_batch(a, list(meanings), "greedy")
    return utts


def acc_inter(speaker: Agent, listener: Agent, meanings,
              productions=None) -> float:
    """Mean exact match with the roles split across two agents (directional)."""
    meanings = list(meanings)
    if productions is None:
        productions = greedy_productions(speaker, meanings)
    preds = listen_batch(listener, productions)
    return float(np.mean([exact_match(m, p) for m, p in zip(meanings, preds)]))


def acc_self(a: Agent, meanings, productions=None) -> float:
    """Mean exact match speaking and listening within one agent."""
    return acc_inter(a, a, meanings, productions=productions)


def order_entropy(p_sov: float) -> float:
    """Shannon entropy in bits of the two-order split; 0 at the extremes."""
    if p_sov <= 0.0 or p_sov >= 1.0:
        return 0.0
    q = 1.0 - p_sov
    return -(p_sov * math.log2(p_sov) + q * math.log2(q))


@dataclass(frozen=True)
class PreferenceProfile:
    """Order/marking preferences over a set of productions.

    Proportions are over grammar-classifiable utterances and are None when
    their conditioning set is empty; ``mean_length`` covers all productions.
    """

    n_total: int
    n_classifiable: int
    n_sov: int
    n_marked: int
    n_marked_sov: int
    n_marked_osv: int
    mean_length: float

    @property
    def p_sov(self) -> float | None:
        return self.n_sov / self.n_classifiable if self.n_classifiable else None

    @property
    def p_marker(self) -> float | None:
        return self.n_marked / self.n_classifiable if self.n_classifiable else None

    @property
    def p_marker_given_sov(self) -> float | None:
        return self.n_marked_sov / self.n_sov if self.n_sov else None

    @property
    def p_marker_given_osv(self) -> float | None:
        n_osv = self.n_classifiable - self.n_sov
        return self.n_marked_osv / n_osv if n_osv else None

    @property
    def order_entropy(self) -> float | None:
        return order_entropy(self.p_sov) if self.n_classifiable else None


def profile_from_productions(pairs) -> PreferenceProfile:
    """Aggregate (meaning, utterance) pairs into a preference profile."""
    n_total = n_class = n_sov = n_marked = n_marked_sov = n_marked_osv = 0
    length_sum = 0
    for m, u in pairs:
        n_total += 1
        length_sum += len(u)
        cat = lang.classify_utterance(u, m)
        if cat is None:
            continue
        order, marked = cat
        n_class += 1
        if order == lang.SOV:
            n_sov += 1
            n_marked_sov += int(marked)
        else:
            n_marked_osv += int(marked)
        n_marked += int(marked)
    return PreferenceProfile(n_total=n_total, n_classifiable=n_class,
                             n_sov=n_sov, n_marked=n_marked,
                             n_marked_sov=n_marked_sov, n_marked_osv=n_marked_osv,
                             mean_length=length_sum / n_total if n_total else 0.0)


def production_profile(a: Agent, meanings,
                       productions=None) -> PreferenceProfile:
    """Preferences of one agent's greedy productions for ``meanings``."""
    meanings = list(meanings)
    if productions is None:
        productions = greedy_productions(a, meanings)
    return profile_from_productions(zip(meanings, productions))


def pool_profiles(profiles) -> PreferenceProfile:
    """Pool classifiable counts from several profiles into one."""
    profiles = list(profiles)
    total_len = sum(p.mean_length * p.n_total for p in profiles)
    n_total = sum(p.n_total for p in profiles)
    return PreferenceProfile(
        n_total=n_total,
        n_classifiable=sum(p.n_classifiable for p in profiles),
        n_sov=sum(p.n_sov for p in profiles),
        n_marked=sum(p.n_marked for p in profiles),
        n_marked_sov=sum(p.n_marked_sov for p in profiles),
        n_marked_osv=sum(p.n_marked_osv for p in profiles),
        mean_length=total_len / n_total if n_total else 0.0,
    )


def group_profile(agents, meanings) -> PreferenceProfile:
    """One profile over all utterances produced by all agents in a group."""
    return pool_profiles(production_profile(a, meanings) for a in agents)


def _fractional_ranks(v: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties sharing their average rank."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs, ys) -> float:
    """Spearman rank correlation: Pearson correlation of fractional ranks.

    Returns nan when either argument has no rank variance.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValueError("spearman_rho needs two equal-length lists, n >= 2")
    rx = _fractional_ranks(xs)
    ry = _fractional_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return float("nan")
    return float(dx @ dy / denom)
