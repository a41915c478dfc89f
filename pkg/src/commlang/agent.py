"""The full-fledged agent: one speaking and one listening network.

The two networks mirror each other and share storage for both embedding
tables: the speaker's meaning embeddings are the listener's output
embeddings, and the speaker's word output embeddings are the listener's
input embeddings.  Training either side therefore moves the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lang
from .nnet import Adam, GruCell, Linear, load_checkpoint, save_checkpoint, uniform_init
from .tensor import (Tensor, add, embedding, gather_rows, log_softmax,
                     matmul_nt, mul, no_grad, rows)

MEANING_DIM = 8
HIDDEN_DIM = 16

# Meaning-embedding table layout: one row per entity then one per action.
N_MEANING_ROWS = lang.N_ENTITIES + lang.N_ACTIONS
ACTION_ROW_BASE = lang.N_ENTITIES

# Decoder output masks over the word table.  Control tokens are never
# emitted; the end token is additionally barred from the first step so
# utterances always have at least one surface token.
_ALLOWED = np.zeros(lang.N_TOKENS, dtype=bool)
_ALLOWED[:lang.N_SURFACE] = True
_ALLOWED[lang.EOS] = True
_ALLOWED_FIRST = _ALLOWED.copy()
_ALLOWED_FIRST[lang.EOS] = False


class SpeakerNet:
    """Meaning -> utterance: summed role-projected embeddings seed a GRU decoder.

    Each element of the meaning is embedded with the shared meaning table
    and passed through its role's projection before the order-invariant
    sum, so the encoding distinguishes who acts from who is acted upon
    while staying insensitive to any ordering of the tuple.
    """

    def __init__(self, meaning_embeddings: Tensor, word_output_embeddings: Tensor,
                 action_in: Linear, agent_in: Linear, patient_in: Linear,
                 gru: GruCell):
        self.meaning_embeddings = meaning_embeddings
        self.word_output_embeddings = word_output_embeddings
        self.action_in = action_in
        self.agent_in = agent_in
        self.patient_in = patient_in
        self.gru = gru

    def parameters(self) -> list[Tensor]:
        return ([self.meaning_embeddings]
                + self.action_in.parameters()
                + self.agent_in.parameters()
                + self.patient_in.parameters()
                + self.gru.parameters()
                + [self.word_output_embeddings])


class ListenerNet:
    """Utterance -> meaning: a GRU encoder scored against the meaning table.

    The final hidden state is projected to one query per role; each query is
    scored by dot product against the role's rows of the shared meaning
    table (actions for the action head, entities for agent and patient).
    """

    def __init__(self, word_input_embeddings: Tensor, meaning_output_embeddings: Tensor,
                 gru: GruCell, action_head: Linear, agent_head: Linear,
                 patient_head: Linear):
        self.word_input_embeddings = word_input_embeddings
        self.meaning_output_embeddings = meaning_output_embeddings
        self.gru = gru
        self.action_head = action_head
        self.agent_head = agent_head
        self.patient_head = patient_head

    def parameters(self) -> list[Tensor]:
        return ([self.word_input_embeddings]
                + self.gru.parameters()
                + self.action_head.parameters()
                + self.agent_head.parameters()
                + self.patient_head.parameters()
                + [self.meaning_output_embeddings])


@dataclass
class Agent:
    id: int
    speaker: SpeakerNet
    listener: ListenerNet
    activation: int = 0
    # Persistent per-agent optimizer state for the communication phase,
    # created lazily on first use (see training.comm_update).
    rl_speaker_opt: Adam | None = field(default=None, repr=False)
    rl_listener_opt: Adam | None = field(default=None, repr=False)

    @property
    def dtype(self):
        return self.speaker.meaning_embeddings.data.dtype

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for t in self.speaker.parameters() + self.listener.parameters():
            out.setdefault(t.name, t)
        return out


def new_agent(agent_id: int, rng: np.random.Generator, dtype=np.float64) -> Agent:
    meaning_emb = uniform_init(rng, (N_MEANING_ROWS, MEANING_DIM), MEANING_DIM,
                               dtype, "meaning_emb")
    word_emb = uniform_init(rng, (lang.N_TOKENS, HIDDEN_DIM), HIDDEN_DIM,
                            dtype, "word_emb")
    speaker = SpeakerNet(
        meaning_embeddings=meaning_emb,
        word_output_embeddings=word_emb,
        action_in=Linear(MEANING_DIM, HIDDEN_DIM, rng, dtype, "spk.action"),
        agent_in=Linear(MEANING_DIM, HIDDEN_DIM, rng, dtype, "spk.agent"),
        patient_in=Linear(MEANING_DIM, HIDDEN_DIM, rng, dtype, "spk.patient"),
        gru=GruCell(HIDDEN_DIM, HIDDEN_DIM, rng, dtype, "spk.gru"),
    )
    listener = ListenerNet(
        word_input_embeddings=word_emb,
        meaning_output_embeddings=meaning_emb,
        gru=GruCell(HIDDEN_DIM, HIDDEN_DIM, rng, dtype, "lst.gru"),
        action_head=Linear(HIDDEN_DIM, MEANING_DIM, rng, dtype, "lst.action"),
        agent_head=Linear(HIDDEN_DIM, MEANING_DIM, rng, dtype, "lst.agent"),
        patient_head=Linear(HIDDEN_DIM, MEANING_DIM, rng, dtype, "lst.patient"),
    )
    return Agent(id=agent_id, speaker=speaker, listener=listener)


def assert_tied(a: Agent) -> bool:
    """True iff both embedding-sharing relations hold as storage identity."""
    return (a.speaker.meaning_embeddings is a.listener.meaning_output_embeddings
            and a.speaker.word_output_embeddings is a.listener.word_input_embeddings
            and a.speaker.meaning_embeddings.data is a.listener.meaning_output_embeddings.data
            and a.speaker.word_output_embeddings.data is a.listener.word_input_embeddings.data)


def _meaning_rows(meanings) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    act = np.fromiter((ACTION_ROW_BASE + m.action for m in meanings), dtype=np.int64)
    agt = np.fromiter((m.agent for m in meanings), dtype=np.int64)
    pat = np.fromiter((m.patient for m in meanings), dtype=np.int64)
    return act, agt, pat


def encode_meanings(a: Agent, meanings) -> Tensor:
    """Initial decoder state: sum of the three role-projected embeddings.

    The sum makes the encoding order-invariant over the meaning tuple; the
    per-role projections keep agent and patient distinguishable.
    """
    act, agt, pat = _meaning_rows(meanings)
    table = a.speaker.meaning_embeddings
    return add(add(a.speaker.action_in(embedding(table, act)),
                   a.speaker.agent_in(embedding(table, agt))),
               a.speaker.patient_in(embedding(table, pat)))


def speak_batch(a: Agent, meanings, mode: str, rng: np.random.Generator | None = None
                ) -> tuple[list[tuple[int, ...]], Tensor, list[np.ndarray]]:
    """Decode utterances for a batch of meanings.

    Returns (utterances, summed log-probabilities as a (B,) tensor, and the
    per-token log-probability values per sample).  ``sample`` draws from the
    softmax; ``greedy`` takes the argmax.  The summed log-probabilities are
    the policy terms of the communication loss; the end token counts as a
    policy action when produced, so termination itself stays trainable.
    """
    if mode not in ("sample", "greedy"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs a random stream")
    B = len(meanings)
    word_table = a.speaker.word_output_embeddings
    h = encode_meanings(a, meanings)
    prev = np.full(B, lang.BOS, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    utts: list[list[int]] = [[] for _ in range(B)]
    token_logps: list[list[float]] = [[] for _ in range(B)]
    total_logp: Tensor | None = None

    for step in range(lang.MAX_UTTERANCE_LEN):
        x = embedding(word_table, prev)
        h = a.speaker.gru.step(x, h)
        logits = matmul_nt(h, word_table)
        allowed = _ALLOWED_FIRST if step == 0 else _ALLOWED
        logp = log_softmax(logits, allowed)
        if mode == "greedy":
            tok = np.argmax(logp.data, axis=-1)
        else:
            tok = _categorical(np.exp(logp.data), rng)
        step_lp = mul(gather_rows(logp, tok), alive.astype(logp.dtype))
        total_logp = step_lp if total_logp is None else add(total_logp, step_lp)

        for b in np.flatnonzero(alive):
            token_logps[b].append(float(logp.data[b, tok[b]]))
            if tok[b] != lang.EOS:
                utts[b].append(int(tok[b]))
        alive = alive & (tok != lang.EOS)
        if not alive.any():
            break
        prev = np.where(alive, tok, lang.PAD)

    utterances = [tuple(u) for u in utts]
    logps = [np.asarray(lp) for lp in token_logps]
    return utterances, total_logp, logps


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorized per-row draw from a batch of distributions."""
    cdf = np.cumsum(probs, axis=-1)
    cdf[:, -1] = 1.0 + 1e-12  # guard against rounding shortfall
    u = rng.random(probs.shape[0])
    return (u[:, None] >= cdf).sum(axis=-1).astype(np.int64)


def speak(a: Agent, m: lang.Meaning, mode: str = "greedy",
          rng: np.random.Generator | None = None) -> tuple[tuple[int, ...], np.ndarray]:
    """Produce one utterance and its per-token log-probabilities."""
    with no_grad():
        utts, _, logps = speak_batch(a, [m], mode, rng)
    return utts[0], logps[0]


def listen_forward(a: Agent, utterances) -> tuple[Tensor, Tensor, Tensor]:
    """Listener forward pass over a batch of utterances.

    Each utterance is consumed with an appended end token; hidden states of
    shorter sequences freeze once exhausted.  Returns the three role
    log-probability tensors: action (B, 8), agent (B, 10), patient (B, 10).
    """
    B = len(utterances)
    lens = np.array([len(u) for u in utterances], dtype=np.int64)
    T = int(lens.max()) + 1  # room for the end token
    toks = np.full((B, T), lang.PAD, dtype=np.int64)
    for b, u in enumerate(utterances):
        toks[b, :lens[b]] = u
        toks[b, lens[b]] = lang.EOS

    word_table = a.listener.word_input_embeddings
    dtype = word_table.data.dtype
    h = Tensor(np.zeros((B, HIDDEN_DIM), dtype=dtype))
    for t in range(T):
        x = embedding(word_table, toks[:, t])
        h_new = a.listener.gru.step(x, h)
        m = (t <= lens).astype(dtype)[:, None]  # step t is real while t <= len
        h = add(mul(h_new, m), mul(h, 1.0 - m)) if not m.all() else h_new

    table = a.listener.meaning_output_embeddings
    action_logits = matmul_nt(a.listener.action_head(h),
                              rows(table, ACTION_ROW_BASE, N_MEANING_ROWS))
    agent_logits = matmul_nt(a.listener.agent_head(h), rows(table, 0, lang.N_ENTITIES))
    patient_logits = matmul_nt(a.listener.patient_head(h), rows(table, 0, lang.N_ENTITIES))
    return (log_softmax(action_logits), log_softmax(agent_logits),
            log_softmax(patient_logits))


def meaning_logprobs(a: Agent, utterances, meanings) -> Tensor:
    """Per-sample log-likelihood of each gold meaning under the listener.

    The (B,) result is differentiable in the listener's parameters; it is
    both the communicative reward and (negated, averaged) the listener loss.
    """
    lp_act, lp_agt, lp_pat = listen_forward(a, utterances)
    act, agt, pat = _meaning_rows(meanings)
    return add(add(gather_rows(lp_act, act - ACTION_ROW_BASE),
                   gather_rows(lp_agt, agt)),
               gather_rows(lp_pat, pat))


def _constrained_meanings(lp_act: np.ndarray, lp_agt: np.ndarray,
                          lp_pat: np.ndarray) -> list[lang.Meaning]:
    """Per-role argmax subject to agent != patient.

    On a collision the likelier of the two one-role substitutions wins, so
    predictions are always valid meanings.
    """
    out = []
    actions = np.argmax(lp_act, axis=-1)
    for b in range(lp_act.shape[0]):
        ai = int(np.argmax(lp_agt[b]))
        pi = int(np.argmax(lp_pat[b]))
        if ai == pi:
            a2 = int(np.argsort(lp_agt[b])[-2])
            p2 = int(np.argsort(lp_pat[b])[-2])
            if lp_agt[b, a2] + lp_pat[b, pi] >= lp_agt[b, ai] + lp_pat[b, p2]:
                ai = a2
            else:
                pi = p2
        out.append(lang.Meaning(int(actions[b]), ai, pi))
    return out


def listen_batch(a: Agent, utterances) -> list[lang.Meaning]:
    """Greedy meaning reconstruction for a batch of utterances."""
    with no_grad():
        lp_act, lp_agt, lp_pat = listen_forward(a, utterances)
    return _constrained_meanings(lp_act.data, lp_agt.data, lp_pat.data)


def listen(a: Agent, u) -> tuple[lang.Meaning, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Reconstruct one meaning; also returns the three role log-prob vectors."""
    if len(u) == 0:
        raise ValueError("cannot listen to an empty utterance")
    with no_grad():
        lp_act, lp_agt, lp_pat = listen_forward(a, [tuple(u)])
    pred = _constrained_meanings(lp_act.data, lp_agt.data, lp_pat.data)[0]
    return pred, (lp_act.data[0], lp_agt.data[0], lp_pat.data[0])


def save_agent(a: Agent, path):
    save_checkpoint(path, a.named_parameters(),
                    meta={"agent_id": a.id, "activation": a.activation,
                          "dtype": str(a.dtype)})


def load_agent(path) -> Agent:
    arrays, meta = load_checkpoint(path)
    a = new_agent(meta["agent_id"], np.random.default_rng(0),
                  dtype=np.dtype(meta["dtype"]))
    a.activation = int(meta["activation"])
    params = a.named_parameters()
    if set(params) != set(arrays):
        raise ValueError("checkpoint does not match the agent architecture")
    for name, t in params.items():
        if t.data.shape != arrays[name].shape:
            raise ValueError(f"checkpoint shape mismatch for {name!r}")
        t.data[...] = arrays[name]
    return a
