"""Neural agents learn miniature languages, then renegotiate them in
pairwise and group communication games."""

__version__ = "0.1.0"

from .agent import Agent, assert_tied, listen, new_agent, speak
from .lang import (Dataset, GrammarSpec, Meaning, build_dataset,
                   classify_utterance, enumerate_meanings, generate_utterance)
from .metrics import (PreferenceProfile, acc_inter, acc_self, exact_match,
                      group_profile, order_entropy, production_profile,
                      spearman_rho)
from .population import (ConnectivityGraph, ScheduleConfig, comm_rounds_for,
                         complete_graph, run_group, run_round)
from .training import (RlConfig, SlConfig, comm_update, compute_reward,
                       inter_turn, self_turn, sl_train)

__all__ = [
    "Agent", "ConnectivityGraph", "Dataset", "GrammarSpec", "Meaning",
    "PreferenceProfile", "RlConfig", "ScheduleConfig", "SlConfig",
    "acc_inter", "acc_self", "assert_tied", "build_dataset",
    "classify_utterance", "comm_rounds_for", "comm_update", "complete_graph",
    "compute_reward", "enumerate_meanings", "exact_match",
    "generate_utterance", "group_profile", "inter_turn", "listen",
    "new_agent", "order_entropy", "production_profile", "run_group",
    "run_round", "self_turn", "sl_train", "spearman_rho", "speak",
]
