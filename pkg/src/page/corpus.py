"""Conversation data model, corpus I/O, candidate pairs and synthetic corpora."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .posgraph import relative_distance

logger = logging.getLogger(__name__)

NEUTRAL = "neutral"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker: str
    text: str
    emotion: str
    vector: tuple[float, ...] | None = None

    @property
    def is_target(self) -> bool:
        return self.emotion != NEUTRAL


@dataclass(frozen=True)
class CandidatePair:
    conv_id: str
    o: int
    t: int
    label: bool


@dataclass(frozen=True)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]
    causes: dict[int, frozenset[int]] = field(default_factory=dict)
    # dataset-supplied candidate pairs (o, t, label); None means "enumerate"
    pairs: tuple[tuple[int, int, bool], ...] | None = None

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> list[str]:
        return [u.speaker for u in self.utterances]

    def validate(self) -> None:
        for pos, u in enumerate(self.utterances, start=1):
            if u.index != pos:
                raise CorpusError(f"{self.id}: utterance indices must be 1..k contiguous, "
                                  f"found {u.index} at position {pos}")
            if not u.emotion:
                raise CorpusError(f"{self.id}: utterance {pos} has an empty emotion label")
        k = len(self.utterances)
        for t, cs in self.causes.items():
            if not 1 <= t <= k:
                raise CorpusError(f"{self.id}: cause target {t} outside 1..{k}")
            if not self.utterances[t - 1].is_target:
                raise CorpusError(f"{self.id}: utterance {t} has causes but a neutral emotion")
            for c in cs:
                if not 1 <= c <= t:
                    raise CorpusError(f"{self.id}: cause {c} of target {t} is not in 1..{t}")
        if self.pairs is not None:
            for o, t, _ in self.pairs:
                if not 1 <= o <= t <= k:
                    raise CorpusError(f"{self.id}: candidate pair ({o}, {t}) violates 1 <= o <= t <= k")


# ---------------------------------------------------------------- pairs

def enumerate_pairs(conv: Conversation) -> list[CandidatePair]:
    """Every (o, t) with o <= t and u_t non-neutral, ordered by t then o."""
    out = []
    for u_t in conv.utterances:
        if not u_t.is_target:
            continue
        gold = conv.causes.get(u_t.index, frozenset())
        for o in range(1, u_t.index + 1):
            out.append(CandidatePair(conv.id, o, u_t.index, o in gold))
    return out


def candidate_pairs(conv: Conversation, strict: bool = False) -> list[CandidatePair]:
    """Dataset-given pairs when the file carries them, else the enumeration.

    With ``strict`` the given pairs must be a subset of the enumeration and
    agree with it on labels.
    """
    if conv.pairs is None:
        return enumerate_pairs(conv)
    given = [CandidatePair(conv.id, o, t, bool(y)) for o, t, y in conv.pairs]
    if strict:
        full = {(p.o, p.t): p.label for p in enumerate_pairs(conv)}
        for p in given:
            if (p.o, p.t) not in full:
                raise CorpusError(f"{conv.id}: file pair ({p.o}, {p.t}) is not an enumerable candidate")
            if full[(p.o, p.t)] != p.label:
                raise CorpusError(f"{conv.id}: file label for ({p.o}, {p.t}) disagrees with causes")
    return sorted(given, key=lambda p: (p.t, p.o))


@dataclass
class CorpusStats:
    conversations: int = 0
    utterances: int = 0
    positive_pairs: int = 0
    negative_pairs: int = 0


def corpus_stats(convs: Iterable[Conversation]) -> CorpusStats:
    stats = CorpusStats()
    for conv in convs:
        stats.conversations += 1
        stats.utterances += len(conv)
        for p in candidate_pairs(conv):
            if p.label:
                stats.positive_pairs += 1
            else:
                stats.negative_pairs += 1
    return stats


# ---------------------------------------------------------------- JSON I/O

def conversation_to_dict(conv: Conversation) -> dict:
    utts = []
    for u in conv.utterances:
        d = {"idx": u.index, "speaker": u.speaker, "text": u.text, "emotion": u.emotion}
        if u.vector is not None:
            d["vec"] = list(u.vector)
        utts.append(d)
    out = {
        "id": conv.id,
        "utterances": utts,
        "causes": {str(t): sorted(cs) for t, cs in sorted(conv.causes.items())},
    }
    if conv.pairs is not None:
        out["pairs"] = [[o, t, int(y)] for o, t, y in conv.pairs]
    return out


def conversation_from_dict(d: dict) -> Conversation:
    try:
        conv_id = str(d["id"])
        raw_utts = d["utterances"]
        utts = tuple(
            Utterance(
                index=int(u["idx"]),
                speaker=str(u["speaker"]),
                text=str(u.get("text", "")),
                emotion=str(u["emotion"]),
                vector=tuple(float(x) for x in u["vec"]) if u.get("vec") is not None else None,
            )
            for u in raw_utts
        )
        raw_causes = d.get("causes", {}) or {}
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusError(f"malformed conversation record: {exc!r}") from exc
    utts = tuple(sorted(utts, key=lambda u: u.index))
    causes: dict[int, frozenset[int]] = {}
    for t_key, cs in raw_causes.items():
        t = int(t_key)
        kept = set()
        for c in cs:
            c = int(c)
            if c > t:
                logger.warning("%s: dropping future cause %d of target %d", conv_id, c, t)
                continue
            kept.add(c)
        if kept:
            causes[t] = frozenset(kept)
    pairs = None
    if d.get("pairs") is not None:
        pairs = tuple((int(o), int(t), bool(y)) for o, t, y in d["pairs"])
    conv = Conversation(conv_id, utts, causes, pairs)
    conv.validate()
    return conv


def _load_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: malformed JSON ({exc})") from exc


def parse_corpus(path: str | os.PathLike, format: str = "native") -> list[Conversation]:
    """Load conversations from ``path``.

    ``native`` is this package's corpus JSON; ``reccon`` is the original
    RECCON annotation release (see :func:`parse_reccon`).
    """
    if format == "reccon":
        return parse_reccon(path)
    if format != "native":
        raise CorpusError(f"unknown corpus format {format!r}")
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise CorpusError(f"{path}: expected a JSON array of conversations")
    return [conversation_from_dict(d) for d in raw]


def parse_reccon(path: str | os.PathLike) -> list[Conversation]:
    """Adapter for RECCON's ``original_annotation/*.json`` files.

    Layout: ``{conv_id: [[turn, ...]]}`` where each turn has ``turn``,
    ``speaker``, ``utterance``, ``emotion`` and, on emotional turns,
    ``expanded emotion cause evidence`` (1-based turn numbers).  Non-integer
    evidence markers and causes after the target are dropped with a warning.
    """
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise CorpusError(f"{path}: expected a RECCON object keyed by conversation id")
    convs = []
    for conv_id, body in raw.items():
        turns = body
        # the release wraps each dialogue in a singleton list
        while isinstance(turns, list) and len(turns) == 1 and isinstance(turns[0], list):
            turns = turns[0]
        if not isinstance(turns, list):
            raise CorpusError(f"{conv_id}: expected a list of turns")
        utts = []
        causes: dict[int, frozenset[int]] = {}
        for pos, turn in enumerate(turns, start=1):
            try:
                idx = int(turn.get("turn", pos))
                utts.append(Utterance(idx, str(turn["speaker"]), str(turn.get("utterance", "")),
                                      str(turn["emotion"]).strip().lower()))
            except (KeyError, AttributeError, ValueError) as exc:
                raise CorpusError(f"{conv_id}: malformed turn {pos}: {exc!r}") from exc
            evidence = turn.get("expanded emotion cause evidence")
            if evidence and utts[-1].is_target:
                kept = set()
                for c in evidence:
                    if isinstance(c, bool) or not isinstance(c, (int, str)) or not str(c).isdigit():
                        logger.warning("%s: ignoring non-turn evidence %r at turn %d", conv_id, c, idx)
                        continue
                    c = int(c)
                    if c > idx:
                        logger.warning("%s: dropping future cause %d of target %d", conv_id, c, idx)
                        continue
                    kept.add(c)
                if kept:
                    causes[idx] = frozenset(kept)
        conv = Conversation(str(conv_id), tuple(utts), causes)
        conv.validate()
        convs.append(conv)
    return convs


def dump_corpus(convs: Sequence[Conversation]) -> str:
    return json.dumps([conversation_to_dict(c) for c in convs], indent=1, sort_keys=True) + "\n"


def write_corpus(path: str | os.PathLike, convs: Sequence[Conversation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_corpus(convs))


def corpus_checksum(convs: Sequence[Conversation]) -> str:
    return hashlib.sha256(dump_corpus(convs).encode("utf-8")).hexdigest()


def build_emotion_vocab(convs: Iterable[Conversation]) -> list[str]:
    labels = {u.emotion for c in convs for u in c.utterances}
    return sorted(labels)


def split_conversations(convs: Sequence[Conversation], val_fraction: float, seed: int
                        ) -> tuple[list[Conversation], list[Conversation]]:
    """Seeded split by conversation; at least one conversation stays in training."""
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")
    order = np.random.default_rng(seed).permutation(len(convs))
    n_val = min(int(round(val_fraction * len(convs))), max(len(convs) - 1, 0))
    val_idx = set(order[:n_val].tolist())
    train = [c for i, c in enumerate(convs) if i not in val_idx]
    val = [c for i, c in enumerate(convs) if i in val_idx]
    return train, val


def permute_labels(convs: Sequence[Conversation], seed: int) -> list[Conversation]:
    """Shuffle cause labels among each conversation's candidate pairs.

    Pair counts per conversation are preserved; any dependence of the label
    on position or content is destroyed.  The result carries explicit pairs.
    """
    rng = np.random.default_rng(seed)
    out = []
    for conv in convs:
        cands = candidate_pairs(conv)
        labels = rng.permutation([p.label for p in cands])
        pairs = tuple((p.o, p.t, bool(y)) for p, y in zip(cands, labels))
        causes: dict[int, set[int]] = {}
        for o, t, y in pairs:
            if y:
                causes.setdefault(t, set()).add(o)
        out.append(Conversation(conv.id, conv.utterances,
                                {t: frozenset(cs) for t, cs in causes.items()}, pairs))
    return out


# ---------------------------------------------------------------- synthetic corpora

SYNTH_EMOTIONS = ("anger", "disgust", "fear", "happiness", "sadness", "surprise")


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for :func:`generate_synthetic`.

    Gold causes are the cue-bearing utterances ``o < t`` whose relative
    distance ``-D(o, t)`` lies in ``cause_distances``; cue placement draws a
    distance per target from ``distance_weights``.
    """

    conversations: int = 32
    min_utterances: int = 10
    max_utterances: int = 18
    speakers: int = 2
    target_rate: float = 0.2
    cause_distances: tuple[int, ...] = (1, 2)
    distance_weights: tuple[float, ...] = (0.6, 0.4)
    cue_types: int = 4
    distractor_rate: float = 0.5
    echo_prob: float = 0.2
    vocab_size: int = 200
    min_tokens: int = 3
    max_tokens: int = 7
    seed: int = 0

    def validate(self) -> None:
        if self.conversations < 0:
            raise ValueError("conversations must be >= 0")
        if not 1 <= self.min_utterances <= self.max_utterances:
            raise ValueError("need 1 <= min_utterances <= max_utterances")
        if self.speakers < 1:
            raise ValueError("speakers must be >= 1")
        if not 0 < self.target_rate <= 1:
            raise ValueError("target_rate must be in (0, 1]")
        if not self.cause_distances or any(d < 1 for d in self.cause_distances):
            raise ValueError("cause_distances must be nonempty positive integers")
        if len(self.distance_weights) != len(self.cause_distances) or any(
                w < 0 for w in self.distance_weights) or sum(self.distance_weights) <= 0:
            raise ValueError("distance_weights must be nonnegative, one per cause distance")
        if self.cue_types < 1 or self.vocab_size < 1:
            raise ValueError("cue_types and vocab_size must be >= 1")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        for name in ("distractor_rate", "echo_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")


def _neg_distance(o: int, t: int, speakers: Sequence[str]) -> float:
    return -float(relative_distance(o, t, speakers[o - 1], speakers[t - 1]))


def generate_synthetic(spec: SyntheticSpec) -> list[Conversation]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    weights = np.asarray(spec.distance_weights, dtype=float)
    weights = weights / weights.sum()
    allowed = set(spec.cause_distances)
    convs = []
    for ci in range(spec.conversations):
        k = int(rng.integers(spec.min_utterances, spec.max_utterances + 1))
        speakers = [chr(ord("A") + i % spec.speakers) if spec.speakers <= 26 else f"S{i % spec.speakers}"
                    for i in range(k)]
        # targets need some history to point at
        targets = [t for t in range(2, k + 1) if rng.random() < spec.target_rate]
        if not targets and k >= 2:
            targets = [int(rng.integers(2, k + 1))]
        cue = [False] * (k + 1)
        echo_of: dict[int, int] = {}
        for t in targets:
            d = int(rng.choice(spec.cause_distances, p=weights))
            spots = [o for o in range(1, t) if _neg_distance(o, t, speakers) == d]
            if not spots:
                spots = [o for o in range(1, t) if _neg_distance(o, t, speakers) in allowed]
            if not spots:
                continue
            o = int(spots[int(rng.integers(len(spots)))])
            cue[o] = True
            echo_of[t] = o
        # distractors sit outside every later target's cause window, so they
        # look like causes by content but are negatives by position
        reach = max(spec.cause_distances)
        for i in range(1, k + 1):
            later = [t for t in targets if t > i]
            if cue[i] or not later:
                continue
            if all(_neg_distance(i, t, speakers) > reach for t in later) and rng.random() < spec.distractor_rate:
                cue[i] = True
        cue_type = {}
        n_cues = 0
        for i in range(1, k + 1):
            if cue[i]:
                cue_type[i] = n_cues % spec.cue_types
                n_cues += 1
        target_set = set(targets)
        causes: dict[int, frozenset[int]] = {}
        for t in targets:
            gold = frozenset(o for o in range(1, t)
                             if cue[o] and _neg_distance(o, t, speakers) in allowed)
            if gold:
                causes[t] = gold
        utts = []
        for i in range(1, k + 1):
            n_tok = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
            tokens = [f"w{int(x)}" for x in rng.integers(0, spec.vocab_size, size=n_tok)]
            if cue[i]:
                tokens.insert(int(rng.integers(0, len(tokens) + 1)), f"cue{cue_type[i]}")
            if i in echo_of and rng.random() < spec.echo_prob:
                tokens.append(f"echo{cue_type[echo_of[i]]}")
            emotion = SYNTH_EMOTIONS[int(rng.integers(len(SYNTH_EMOTIONS)))] if i in target_set else NEUTRAL
            utts.append(Utterance(i, speakers[i - 1], " ".join(tokens), emotion))
        conv = Conversation(f"synth-{spec.seed}-{ci}", tuple(utts), causes)
        conv.validate()
        convs.append(conv)
    return convs
