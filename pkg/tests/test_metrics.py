"""Metric correctness against brute-force references."""

import math

import numpy as np
import pytest
import scipy.stats

from commlang import lang
from commlang.agent import listen_batch, new_agent
from commlang.lang import GrammarSpec, Meaning, generate_utterance
from commlang.metrics import (PreferenceProfile, acc_inter, acc_self,
                              exact_match, group_profile, order_entropy,
                              pool_profiles, production_profile,
                              profile_from_productions, spearman_rho)
from _oracles import entropy_bits_reference, spearman_reference


def test_exact_match_basics():
    m = Meaning(2, 3, 4)
    assert exact_match(m, Meaning(2, 3, 4)) == 1
    assert exact_match(m, Meaning(2, 4, 3)) == 0
    assert exact_match(m, Meaning(1, 3, 4)) == 0


def test_random_listener_hits_chance_level():
    # predictions vs independently drawn uniform meanings: p = 1/720 exactly
    all_meanings = lang.enumerate_meanings()
    rng = np.random.default_rng(0)
    hits = trials = 0
    for seed in range(40):
        listener = new_agent(seed, np.random.default_rng(1000 + seed))
        utts = [generate_utterance(m, GrammarSpec(0.5, 0.5), rng)
                for m in all_meanings]
        preds = listen_batch(listener, utts)
        targets = [all_meanings[i] for i in rng.integers(0, 720, size=720)]
        hits += sum(exact_match(t, p) for t, p in zip(targets, preds))
        trials += 720
    p = 1.0 / 720.0
    sigma = math.sqrt(p * (1 - p) / trials)
    assert abs(hits / trials - p) <= 3 * sigma


def test_acc_self_equals_acc_inter_with_itself():
    a = new_agent(0, np.random.default_rng(1))
    meanings = lang.enumerate_meanings()[:50]
    assert acc_self(a, meanings) == acc_inter(a, a, meanings)


def test_acc_inter_is_deterministic_and_directional():
    a = new_agent(0, np.random.default_rng(2))
    b = new_agent(1, np.random.default_rng(3))
    meanings = lang.enumerate_meanings()[:64]
    assert acc_inter(a, b, meanings) == acc_inter(a, b, meanings)
    # untied random agents sit near chance, far below a meaningful signal
    assert acc_inter(a, b, meanings) < 0.1


def test_order_entropy_values():
    assert order_entropy(1.0) == 0.0
    assert order_entropy(0.0) == 0.0
    assert order_entropy(0.5) == 1.0
    assert order_entropy(0.8) == pytest.approx(0.721928, abs=1e-6)
    rng = np.random.default_rng(4)
    for p in rng.random(200):
        assert order_entropy(p) == pytest.approx(entropy_bits_reference(p), abs=1e-12)
        assert order_entropy(p) == pytest.approx(order_entropy(1 - p), abs=1e-12)
        assert order_entropy(p) <= 1.0


def _pairs(spec):
    """Build (meaning, utterance) pairs from (order, marked, ok) triples."""
    out = []
    m = Meaning(0, 1, 2)
    for order, marked, ok in spec:
        if not ok:
            out.append((m, (5, 5, 5)))
            continue
        for u, cat in lang.licensed_utterances(m).items():
            if cat == (order, marked):
                out.append((m, u))
    return out


def test_profile_all_sov():
    prof = profile_from_productions(_pairs([(lang.SOV, False, True)] * 10))
    assert prof.p_sov == 1.0
    assert prof.order_entropy == 0.0
    assert prof.p_marker == 0.0
    assert prof.p_marker_given_osv is None
    assert prof.mean_length == 3.0


def test_profile_balanced_orders_is_one_bit():
    spec = [(lang.SOV, True, True)] * 5 + [(lang.OSV, False, True)] * 5
    prof = profile_from_productions(_pairs(spec))
    assert prof.order_entropy == 1.0
    assert prof.p_marker == 0.5
    assert prof.p_marker_given_sov == 1.0
    assert prof.p_marker_given_osv == 0.0
    assert prof.mean_length == 3.5


def test_profile_with_no_classifiable_productions_is_undefined():
    prof = profile_from_productions(_pairs([(None, None, False)] * 4))
    assert prof.n_classifiable == 0
    assert prof.p_sov is None
    assert prof.p_marker is None
    assert prof.order_entropy is None
    assert prof.mean_length == 3.0


def test_profile_counts_unclassifiable_in_totals():
    spec = [(lang.SOV, False, True)] * 3 + [(None, None, False)]
    prof = profile_from_productions(_pairs(spec))
    assert prof.n_total == 4
    assert prof.n_classifiable == 3


def test_pooling_matches_count_weighted_average():
    rng = np.random.default_rng(5)
    for _ in range(50):
        profs = []
        for _ in range(rng.integers(2, 5)):
            nc = int(rng.integers(1, 40))
            ns = int(rng.integers(0, nc + 1))
            nm = int(rng.integers(0, nc + 1))
            nms = int(rng.integers(0, min(ns, nm) + 1))
            nmo = min(nm - nms, nc - ns)
            profs.append(PreferenceProfile(
                n_total=nc + 2, n_classifiable=nc, n_sov=ns,
                n_marked=nms + nmo, n_marked_sov=nms, n_marked_osv=nmo,
                mean_length=float(rng.uniform(3, 4))))
        pooled = pool_profiles(profs)
        total_c = sum(p.n_classifiable for p in profs)
        want_sov = sum(p.p_sov * p.n_classifiable for p in profs) / total_c
        assert pooled.p_sov == pytest.approx(want_sov, abs=1e-12)
        want_mk = sum(p.p_marker * p.n_classifiable for p in profs) / total_c
        assert pooled.p_marker == pytest.approx(want_mk, abs=1e-12)


def test_group_profile_of_one_agent_equals_its_profile():
    a = new_agent(0, np.random.default_rng(6))
    meanings = lang.enumerate_meanings()[:60]
    assert group_profile([a], meanings) == production_profile(a, meanings)


def test_group_profile_pools_opposite_order_producers():
    left = profile_from_productions(_pairs([(lang.SOV, False, True)] * 8))
    right = profile_from_productions(_pairs([(lang.OSV, False, True)] * 8))
    pooled = pool_profiles([left, right])
    assert pooled.order_entropy == 1.0


def test_spearman_monotone_cases():
    assert spearman_rho([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman_rho([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman_rho([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-12)


def test_spearman_matches_references_with_ties():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(3, 30))
        xs = rng.integers(0, 6, size=n).astype(float)  # plenty of ties
        ys = rng.integers(0, 6, size=n).astype(float)
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        got = spearman_rho(xs, ys)
        assert got == pytest.approx(spearman_reference(xs, ys), abs=1e-12)
        assert got == pytest.approx(scipy.stats.spearmanr(xs, ys).statistic, abs=1e-9)


def test_spearman_invariant_under_monotone_transforms():
    rng = np.random.default_rng(8)
    for _ in range(50):
        xs = rng.standard_normal(20)
        ys = rng.standard_normal(20)
        base = spearman_rho(xs, ys)
        assert spearman_rho(np.exp(xs), ys) == pytest.approx(base, abs=1e-12)
        assert spearman_rho(xs, 3 * ys + 7) == pytest.approx(base, abs=1e-12)
        assert spearman_rho(np.tanh(xs), ys ** 3) == pytest.approx(base, abs=1e-12)


def test_spearman_degenerate_inputs():
    assert math.isnan(spearman_rho([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        spearman_rho([1.0], [2.0])
    with pytest.raises(ValueError):
        spearman_rho([1.0, 2.0], [1.0, 2.0, 3.0])
