"""Meaning space, vocabulary, grammars, and dataset construction.

The world is deliberately tiny: 10 entities, 8 actions, verb-final
utterances that vary only in constituent order (SOV vs OSV) and in the
presence of the postposed object marker "mk".
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

N_ENTITIES = 10
N_ACTIONS = 8
N_MEANINGS = N_ENTITIES * (N_ENTITIES - 1) * N_ACTIONS  # 720

# Surface token ids: one word per entity/action plus the marker.
ENTITY_BASE = 0                    # e0..e9 -> 0..9
ACTION_BASE = N_ENTITIES           # a0..a7 -> 10..17
MARKER = ACTION_BASE + N_ACTIONS   # "mk"   -> 18
N_SURFACE = MARKER + 1             # 19

# Decoder-internal control tokens; never part of a classified utterance.
BOS = N_SURFACE
EOS = N_SURFACE + 1
PAD = N_SURFACE + 2
N_TOKENS = N_SURFACE + 3

MAX_UTTERANCE_LEN = 10

SOV = "SOV"
OSV = "OSV"

# Split sizes shared by both profiles: 480 supervised pairs, 144 test meanings.
N_SL_TRAIN = 480
N_TEST = 144
N_TURN_INTERACTIVE = 320   # 10 batches of 32 per communication turn
N_TURN_REPLICATION = 480   # 15 batches of 32 per self-play turn


@dataclass(frozen=True, order=True)
class Meaning:
    """One scene: an action, the entity acting, and the entity acted upon."""

    action: int
    agent: int
    patient: int

    def __post_init__(self):
        if not 0 <= self.action < N_ACTIONS:
            raise ValueError(f"action {self.action} out of range")
        if not 0 <= self.agent < N_ENTITIES or not 0 <= self.patient < N_ENTITIES:
            raise ValueError("entity id out of range")
        if self.agent == self.patient:
            raise ValueError("agent and patient must differ")


@dataclass(frozen=True)
class Vocabulary:
    """Fixed word list: 10 entity words, 8 action words, one marker."""

    entity_words: tuple[str, ...] = tuple(f"e{i}" for i in range(N_ENTITIES))
    action_words: tuple[str, ...] = tuple(f"a{i}" for i in range(N_ACTIONS))
    marker: str = "mk"
    control_words: tuple[str, str, str] = ("<bos>", "<eos>", "<pad>")

    def word(self, token: int) -> str:
        if 0 <= token < ACTION_BASE:
            return self.entity_words[token]
        if ACTION_BASE <= token < MARKER:
            return self.action_words[token - ACTION_BASE]
        if token == MARKER:
            return self.marker
        if N_SURFACE <= token < N_TOKENS:
            return self.control_words[token - N_SURFACE]
        raise ValueError(f"unknown token id {token}")

    def token(self, word: str) -> int:
        return self._index()[word]

    def _index(self) -> dict[str, int]:
        idx = {w: i for i, w in enumerate(self.entity_words)}
        idx.update({w: ACTION_BASE + i for i, w in enumerate(self.action_words)})
        idx[self.marker] = MARKER
        idx.update({w: N_SURFACE + i for i, w in enumerate(self.control_words)})
        return idx


VOCAB = Vocabulary()

_GRAMMAR_NAME = re.compile(r"^(\d{1,3})s\+(\d{1,3})m$")


@dataclass(frozen=True)
class GrammarSpec:
    """An initial language: proportion of SOV orders and of marked objects."""

    p_sov: float
    p_marker: float

    def __post_init__(self):
        if not (0.0 <= self.p_sov <= 1.0 and 0.0 <= self.p_marker <= 1.0):
            raise ValueError("grammar proportions must lie in [0, 1]")

    @property
    def name(self) -> str:
        return f"{round(100 * self.p_sov)}s+{round(100 * self.p_marker)}m"

    @classmethod
    def parse(cls, name: str) -> "GrammarSpec":
        m = _GRAMMAR_NAME.match(name.strip())
        if m is None:
            raise ValueError(f"bad grammar name {name!r} (expected like '50s+50m')")
        g = cls(int(m.group(1)) / 100.0, int(m.group(2)) / 100.0)
        if g.name != name.strip():
            raise ValueError(f"grammar name {name!r} does not round-trip")
        return g


def enumerate_meanings() -> list[Meaning]:
    """All 720 meanings in lexicographic (action, agent, patient) order."""
    out = []
    for action in range(N_ACTIONS):
        for agent in range(N_ENTITIES):
            for patient in range(N_ENTITIES):
                if patient != agent:
                    out.append(Meaning(action, agent, patient))
    return out


def generate_utterance(m: Meaning, g: GrammarSpec,
                       rng: np.random.Generator) -> tuple[int, ...]:
    """Sample one grammar-licensed utterance for a meaning.

    Two independent draws, order first then marking; the marker always
    immediately follows the object word and the verb is always final.
    """
    sov = rng.random() < g.p_sov
    marked = rng.random() < g.p_marker
    subj = ENTITY_BASE + m.agent
    obj = ENTITY_BASE + m.patient
    verb = ACTION_BASE + m.action
    if sov:
        toks = [subj, obj, MARKER, verb] if marked else [subj, obj, verb]
    else:
        toks = [obj, MARKER, subj, verb] if marked else [obj, subj, verb]
    return tuple(toks)


def licensed_utterances(m: Meaning) -> dict[tuple[int, ...], tuple[str, bool]]:
    """The four realizations of a meaning, keyed by token sequence."""
    subj = ENTITY_BASE + m.agent
    obj = ENTITY_BASE + m.patient
    verb = ACTION_BASE + m.action
    return {
        (subj, obj, verb): (SOV, False),
        (subj, obj, MARKER, verb): (SOV, True),
        (obj, subj, verb): (OSV, False),
        (obj, MARKER, subj, verb): (OSV, True),
    }


def classify_utterance(u: tuple[int, ...],
                       m: Meaning) -> tuple[str, bool] | None:
    """Map an utterance back to (order, marked) iff the grammar licenses it
    as a realization of ``m``; anything else is unclassifiable."""
    return licensed_utterances(m).get(tuple(u))


class CoverageError(RuntimeError):
    """A split could not satisfy the all-items-seen constraint."""


@dataclass(frozen=True)
class Dataset:
    """Frozen splits for one grammar and seed.

    ``sl_train`` are supervised (meaning, utterance) pairs; ``rl_pool`` is
    the meaning pool communication turns draw from; ``test`` is held out
    from every training phase.
    """

    grammar: GrammarSpec
    seed: int
    profile: str  # "interactive" or "replication"
    sl_train: tuple[tuple[Meaning, tuple[int, ...]], ...]
    rl_pool: tuple[Meaning, ...]
    test: tuple[Meaning, ...]

    @property
    def turn_size(self) -> int:
        return N_TURN_REPLICATION if self.profile == "replication" else N_TURN_INTERACTIVE


def _covers_all(meanings) -> bool:
    ents, acts = set(), set()
    for m in meanings:
        ents.add(m.agent)
        ents.add(m.patient)
        acts.add(m.action)
    return len(ents) == N_ENTITIES and len(acts) == N_ACTIONS


def build_dataset(g: GrammarSpec, seed: int, profile: str = "interactive") -> Dataset:
    """Build the deterministic splits for one grammar.

    interactive: 80/20 split into a 576-meaning pool and 144 test meanings,
    then 480 supervised pairs resampled from the pool.
    replication: 480 supervised meanings and 144 test meanings drawn
    directly from the full space; the pool equals the supervised meanings.

    Every entity and action must occur in the supervised meanings; the
    split is redrawn (bounded) until that holds.
    """
    if profile not in ("interactive", "replication"):
        raise ValueError(f"unknown split profile {profile!r}")
    split_ss, utt_ss = np.random.SeedSequence(seed).spawn(2)
    split_rng = np.random.default_rng(split_ss)
    utt_rng = np.random.default_rng(utt_ss)
    all_meanings = enumerate_meanings()

    for _ in range(100):
        perm = split_rng.permutation(N_MEANINGS)
        test = tuple(all_meanings[i] for i in perm[:N_TEST])
        if profile == "interactive":
            pool = tuple(all_meanings[i] for i in perm[N_TEST:])
            pick = split_rng.choice(len(pool), size=N_SL_TRAIN, replace=False)
            sl_meanings = [pool[i] for i in pick]
        else:
            pool_meanings = [all_meanings[i] for i in perm[N_TEST:N_TEST + N_SL_TRAIN]]
            sl_meanings = pool_meanings
            pool = tuple(pool_meanings)
        if _covers_all(sl_meanings):
            break
    else:  # pragma: no cover - unreachable at these split sizes
        raise CoverageError("could not cover all entities/actions in sl_train")

    sl_train = tuple((m, generate_utterance(m, g, utt_rng)) for m in sl_meanings)
    return Dataset(grammar=g, seed=seed, profile=profile,
                   sl_train=sl_train, rl_pool=pool, test=test)


def sample_turn_meanings(d: Dataset, rng: np.random.Generator) -> list[Meaning]:
    """Draw one interactive turn's 320 meanings without replacement."""
    if d.profile != "interactive":
        raise ValueError("turn sampling at 320 requires the interactive profile")
    assert len(d.rl_pool) >= N_TURN_INTERACTIVE
    pick = rng.choice(len(d.rl_pool), size=N_TURN_INTERACTIVE, replace=False)
    return [d.rl_pool[i] for i in pick]


def turn_meanings(d: Dataset, rng: np.random.Generator) -> list[Meaning]:
    """Meanings for one communication turn under the dataset's profile."""
    if d.profile == "replication":
        order = rng.permutation(len(d.rl_pool))
        return [d.rl_pool[i] for i in order]
    return sample_turn_meanings(d, rng)


def _format_meaning(m: Meaning) -> str:
    return f"{m.action},{m.agent},{m.patient}"


def _parse_meaning(s: str) -> Meaning:
    a, ag, pt = (int(x) for x in s.split(","))
    return Meaning(a, ag, pt)


def save_dataset(d: Dataset, path):
    """Line-oriented text format: one 'meaning<TAB>utterance tokens' per line."""
    lines = [f"# grammar={d.grammar.name} seed={d.seed} profile={d.profile}"]
    lines.append("[sl_train]")
    for m, u in d.sl_train:
        words = " ".join(VOCAB.word(t) for t in u)
        lines.append(f"{_format_meaning(m)}\t{words}")
    lines.append("[rl_pool]")
    lines.extend(_format_meaning(m) for m in d.rl_pool)
    lines.append("[test]")
    lines.extend(_format_meaning(m) for m in d.test)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    header = re.match(r"# grammar=(\S+) seed=(\d+) profile=(\S+)", lines[0])
    if header is None:
        raise ValueError(f"{path}: missing dataset header")
    grammar = GrammarSpec.parse(header.group(1))
    seed = int(header.group(2))
    profile = header.group(3)
    section = None
    sl_train, rl_pool, test = [], [], []
    for ln in lines[1:]:
        if not ln:
            continue
        if ln.startswith("["):
            section = ln.strip("[]")
            continue
        if section == "sl_train":
            mpart, upart = ln.split("\t")
            toks = tuple(VOCAB.token(w) for w in upart.split())
            sl_train.append((_parse_meaning(mpart), toks))
        elif section == "rl_pool":
            rl_pool.append(_parse_meaning(ln))
        elif section == "test":
            test.append(_parse_meaning(ln))
        else:
            raise ValueError(f"{path}: line outside any section: {ln!r}")
    return Dataset(grammar=grammar, seed=seed, profile=profile,
                   sl_train=tuple(sl_train), rl_pool=tuple(rl_pool),
                   test=tuple(test))
