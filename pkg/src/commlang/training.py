"""The two learning phases.

Supervised learning alternates speaker and listener epochs over gold
(meaning, utterance) pairs.  Communication turns sample utterances from the
speaker, score them with the listener's meaning log-likelihood as a shared
reward, and update the speaker by policy gradient and the listener by
plain likelihood ascent on the sampled pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lang
from .agent import Agent, meaning_logprobs, speak_batch
from .nnet import Adam
from .tensor import Tensor, add, embedding, gather_rows, log_softmax, matmul_nt, mul


@dataclass
class SlConfig:
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 0.01
    speaker_first: bool = True


@dataclass
class RlConfig:
    learning_rate: float = 0.005
    batches_per_turn: int = 10
    batch_size: int = 32
    # Estimator knobs; the defaults reproduce the plain objective.
    reward_baseline: float = 0.0
    entropy_bonus: float = 0.0


def speaker_nll(a: Agent, pairs) -> Tensor:
    """Teacher-forced decoder cross-entropy, averaged over the batch.

    Per sample the loss sums -log p(token) over the gold tokens plus the
    end token, under the same output masking the decoder samples with.
    """
    from .agent import _ALLOWED, _ALLOWED_FIRST, encode_meanings

    B = len(pairs)
    lens = np.array([len(u) for _, u in pairs], dtype=np.int64)
    T = int(lens.max()) + 1  # gold tokens plus the end token
    inputs = np.full((B, T), lang.PAD, dtype=np.int64)
    targets = np.full((B, T), lang.EOS, dtype=np.int64)
    weight = np.zeros((B, T))
    for b, (_, u) in enumerate(pairs):
        inputs[b, 0] = lang.BOS
        inputs[b, 1:lens[b] + 1] = u
        targets[b, :lens[b]] = u
        weight[b, :lens[b] + 1] = 1.0

    word_table = a.speaker.word_output_embeddings
    dtype = word_table.data.dtype
    h = encode_meanings(a, [m for m, _ in pairs])
    loss = None
    for t in range(T):
        x = embedding(word_table, inputs[:, t])
        h = a.speaker.gru.step(x, h)
        logp = log_softmax(matmul_nt(h, word_table),
                           _ALLOWED_FIRST if t == 0 else _ALLOWED)
        step = mul(gather_rows(logp, targets[:, t]), weight[:, t].astype(dtype))
        loss = step if loss is None else add(loss, step)
    return mul(loss.mean(), -1.0)


def listener_nll(a: Agent, pairs) -> Tensor:
    """Summed three-role cross-entropy on gold meanings, batch mean."""
    meanings = [m for m, _ in pairs]
    utterances = [u for _, u in pairs]
    return mul(meaning_logprobs(a, utterances, meanings).mean(), -1.0)


def sl_train(a: Agent, d: lang.Dataset, cfg: SlConfig,
             rng: np.random.Generator) -> dict[str, list[float]]:
    """Supervised phase: alternate speaker/listener epochs with Adam.

    Returns the per-epoch training losses keyed by role.
    """
    if not d.sl_train:
        raise ValueError("empty supervised dataset")
    speaker_opt = Adam(a.speaker.parameters(), lr=cfg.learning_rate)
    listener_opt = Adam(a.listener.parameters(), lr=cfg.learning_rate)
    history: dict[str, list[float]] = {"speaker": [], "listener": []}
    data = list(d.sl_train)
    for epoch in range(cfg.epochs):
        speaker_epoch = (epoch % 2 == 0) == cfg.speaker_first
        order = rng.permutation(len(data))
        total, n_batches = 0.0, 0
        for start in range(0, len(data), cfg.batch_size):
            batch = [data[i] for i in order[start:start + cfg.batch_size]]
            if speaker_epoch:
                loss = speaker_nll(a, batch)
                loss.backward()
                speaker_opt.step()
            else:
                loss = listener_nll(a, batch)
                loss.backward()
                listener_opt.step()
            total += loss.item()
            n_batches += 1
        history["speaker" if speaker_epoch else "listener"].append(total / n_batches)
    return history


def compute_reward(m: lang.Meaning, u_hat, listener: Agent) -> Tensor:
    """Shared reward: the listener's log-likelihood of the whole meaning.

    Differentiable in the listener's parameters; the speaker consumes only
    its value.
    """
    if len(u_hat) == 0:
        raise ValueError("cannot score an empty utterance")
    return meaning_logprobs(listener, [tuple(u_hat)], [m]).sum()


def _rl_opts(speaker: Agent, listener: Agent, cfg: RlConfig) -> tuple[Adam, Adam]:
    if speaker.rl_speaker_opt is None:
        speaker.rl_speaker_opt = Adam(speaker.speaker.parameters(), lr=cfg.learning_rate)
    if listener.rl_listener_opt is None:
        listener.rl_listener_opt = Adam(listener.listener.parameters(), lr=cfg.learning_rate)
    return speaker.rl_speaker_opt, listener.rl_listener_opt


def comm_update(speaker: Agent, listener: Agent, meanings, cfg: RlConfig,
                rng: np.random.Generator):
    """One communication turn over a fixed set of meanings.

    Per batch: the speaker samples utterances; the listener's meaning
    log-likelihood is the reward; the speaker takes a policy-gradient step
    with the reward as a constant weight, then the listener takes a
    likelihood-ascent step on the sampled pairs.  The shared embedding
    tables receive both updates.
    """
    if len(meanings) != cfg.batches_per_turn * cfg.batch_size:
        raise ValueError(f"a turn needs {cfg.batches_per_turn}x{cfg.batch_size} "
                         f"meanings, got {len(meanings)}")
    speaker_opt, listener_opt = _rl_opts(speaker, listener, cfg)
    for start in range(0, len(meanings), cfg.batch_size):
        batch = meanings[start:start + cfg.batch_size]
        utts, total_logp, _ = speak_batch(speaker, batch, "sample", rng)
        reward = meaning_logprobs(listener, utts, batch)
        weights = -(reward.data - cfg.reward_baseline)

        speaker_loss = mul(total_logp, weights).mean()
        if cfg.entropy_bonus:
            speaker_loss = add(speaker_loss, mul(total_logp.mean(), cfg.entropy_bonus))
        speaker_loss.backward()
        speaker_opt.step()

        listener_loss = mul(reward.mean(), -1.0)
        listener_loss.backward()
        listener_opt.step()


def self_turn(a: Agent, d: lang.Dataset, cfg: RlConfig, rng: np.random.Generator):
    """One self-play turn: the agent's speaker talks to its own listener."""
    meanings = lang.turn_meanings(d, rng)
    turn_cfg = _fit_turn(cfg, len(meanings))
    comm_update(a, a, meanings, turn_cfg, rng)


def inter_turn(speaker: Agent, listener: Agent, d: lang.Dataset, cfg: RlConfig,
               rng: np.random.Generator):
    """One interactive turn between two distinct agents.

    The speaker's pool supplies the meanings.  Both participants' activation
    counters advance; the scheduler reads them to trigger self-play.
    """
    if speaker is listener:
        raise ValueError("inter_turn needs two distinct agents; use self_turn")
    meanings = lang.turn_meanings(d, rng)
    turn_cfg = _fit_turn(cfg, len(meanings))
    comm_update(speaker, listener, meanings, turn_cfg, rng)
    speaker.activation += 1
    listener.activation += 1


def _fit_turn(cfg: RlConfig, n_meanings: int) -> RlConfig:
    """Per-profile batch count: 10 batches interactively, 15 in replication."""
    batches = n_meanings // cfg.batch_size
    if batches * cfg.batch_size != n_meanings:
        raise ValueError(f"turn size {n_meanings} not a multiple of {cfg.batch_size}")
    if batches == cfg.batches_per_turn:
        return cfg
    return RlConfig(learning_rate=cfg.learning_rate, batches_per_turn=batches,
                    batch_size=cfg.batch_size, reward_baseline=cfg.reward_baseline,
                    entropy_bonus=cfg.entropy_bonus)


def sl_eval_listening(a: Agent, d: lang.Dataset, rng: np.random.Generator) -> float:
    """Held-out listening exact match against freshly generated gold utterances."""
    from .agent import listen_batch
    from .metrics import exact_match

    gold = [lang.generate_utterance(m, d.grammar, rng) for m in d.test]
    preds = listen_batch(a, gold)
    return float(np.mean([exact_match(m, p) for m, p in zip(d.test, preds)]))
