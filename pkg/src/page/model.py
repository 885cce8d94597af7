"""Pair-wise cause classifier on top of the encoder and position-aware graph."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import numerics as nx
from .corpus import CandidatePair, Conversation, candidate_pairs
from .encoder import UNK_EMOTION, EncoderConfig, encode, encode_base, init_encoder_params, token_buckets
from .numerics import Tensor
from .posgraph import ConversationGraph, conversation_graph
from .rgcn import init_rgcn_params, layers_from_params, stack_layers


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    window: int = 3
    layers: int = 1
    c_mode: str = "fixed"
    c_value: float = 2.0
    cls_hidden: int = 300
    ablate_pag: bool = False
    emotions: tuple[str, ...] = (UNK_EMOTION,)

    def validate(self) -> None:
        self.encoder.validate()
        if self.window < 1 or self.layers < 1 or self.cls_hidden < 1:
            raise ValueError("window, layers and cls_hidden must be >= 1")
        if self.c_mode not in ("fixed", "degree"):
            raise ValueError(f"unknown c_mode {self.c_mode!r}")
        if self.c_mode == "fixed" and self.c_value <= 0:
            raise ValueError("c_value must be positive")
        if UNK_EMOTION not in self.emotions:
            raise ValueError(f"emotion vocabulary must contain {UNK_EMOTION!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["emotions"] = list(self.emotions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        enc = EncoderConfig(**d.pop("encoder", {}))
        if "emotions" in d:
            d["emotions"] = tuple(d["emotions"])
        return cls(encoder=enc, **d)


def with_emotions(cfg: ModelConfig, labels) -> ModelConfig:
    vocab = sorted(set(labels) - {UNK_EMOTION})
    return dataclasses.replace(cfg, emotions=(UNK_EMOTION, *vocab))


@dataclass
class PairPrediction:
    conv_id: str
    o: int
    t: int
    prob: float
    label: bool | None = None

    def hard(self, threshold: float = 0.5) -> bool:
        # ties go to the negative (majority) class
        return self.prob > threshold


@dataclass
class Prepared:
    """Per-conversation constants reused across forwards."""
    conv: Conversation
    pairs: list[CandidatePair]
    emotion_ids: list[int]
    bags: list[list[int]] | None
    base: Tensor | None
    graph: ConversationGraph
    adjacency: dict[Fraction, np.ndarray]
    o_index: np.ndarray
    t_index: np.ndarray
    labels: np.ndarray


def init_head_params(d_u: int, hidden: int, rng: np.random.Generator) -> dict[str, Tensor]:
    p = {
        "head.W1": nx.parameter(nx.glorot_uniform(rng, 2 * d_u, hidden)),
        "head.b1": nx.parameter(np.zeros(hidden)),
        "head.W2": nx.parameter(nx.glorot_uniform(rng, hidden, 1)),
        "head.b2": nx.parameter(np.zeros(1)),
    }
    for name, t in p.items():
        t.name = name
    return p


def head_logits(h_o: Tensor, h_t: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Pre-sigmoid scores for rows of ``h_o`` paired with rows of ``h_t``."""
    z = nx.concat([h_o, h_t], axis=1)
    if z.shape[1] != params["head.W1"].shape[0]:
        raise nx.ShapeError(f"pair input width {z.shape[1]} != head input {params['head.W1'].shape[0]}")
    hidden = nx.relu(nx.add(nx.matmul(z, params["head.W1"]), params["head.b1"]))
    return nx.add(nx.matmul(hidden, params["head.W2"]), params["head.b2"])


def classify_pair(h_o, h_t, params: dict[str, Tensor]) -> float:
    """Probability that utterance ``o`` causes the emotion of target ``t``."""
    h_o = nx.as_tensor(np.asarray(nx.as_tensor(h_o).data).reshape(1, -1))
    h_t = nx.as_tensor(np.asarray(nx.as_tensor(h_t).data).reshape(1, -1))
    if h_o.shape != h_t.shape:
        raise nx.ShapeError(f"h_o {h_o.shape} and h_t {h_t.shape} differ")
    return float(nx.sigmoid(head_logits(h_o, h_t, params)).data[0, 0])


def bce_loss(probs, labels, pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross-entropy on probabilities."""
    probs = nx.as_tensor(probs)
    y = np.asarray(labels, dtype=np.float64).reshape(probs.shape)
    if probs.size == 0:
        raise ValueError("bce_loss on an empty batch")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    pos = nx.mul(nx.log(probs), y * pos_weight)
    neg = nx.mul(nx.log(nx.sub(1.0, probs)), 1.0 - y)
    return nx.scale(nx.mean_all(nx.add(pos, neg)), -1.0)


def bce_with_logits_sum(logits: Tensor, labels: np.ndarray, pos_weight: float = 1.0) -> Tensor:
    """Summed BCE computed from logits: ``-[w y log s(z) + (1 - y) log s(-z)]``."""
    y = np.asarray(labels, dtype=np.float64).reshape(logits.shape)
    pos = nx.mul(nx.log_sigmoid(logits), y * pos_weight)
    neg = nx.mul(nx.log_sigmoid(nx.scale(logits, -1.0)), 1.0 - y)
    return nx.scale(nx.sum_all(nx.add(pos, neg)), -1.0)


class PageModel:
    """Encoder -> position-aware graph -> R-GCN -> pair classifier.

    With ``ablate_pag`` the graph stage is skipped and no relation weights
    are created; the encoder and classifier paths are shared unchanged.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, params: dict[str, Tensor] | None = None):
        cfg.validate()
        self.cfg = cfg
        self.emotion_index = {e: i for i, e in enumerate(cfg.emotions)}
        if params is None:
            rng = np.random.default_rng(seed)
            params = init_encoder_params(cfg.encoder, len(cfg.emotions), rng)
            if not cfg.ablate_pag:
                params.update(init_rgcn_params(cfg.encoder.d_u, cfg.window, cfg.layers, rng))
            params.update(init_head_params(cfg.encoder.d_u, cfg.cls_hidden, rng))
        self.params = params
        self._layers = None if cfg.ablate_pag else layers_from_params(
            params, cfg.window, cfg.layers, cfg.c_mode, cfg.c_value)

    # ------------------------------------------------------------ parameters
    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in self.params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data[...] = state[name]

    def save(self, path: str | os.PathLike, extra_meta: dict | None = None) -> None:
        meta = {"config": self.cfg.to_dict()}
        meta.update(extra_meta or {})
        nx.save_checkpoint(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PageModel":
        state, meta = nx.load_checkpoint(path)
        model = cls(ModelConfig.from_dict(meta["config"]))
        model.load_state_dict(state)
        return model

    # ------------------------------------------------------------ forward
    def prepare(self, conv: Conversation) -> Prepared:
        enc = self.cfg.encoder
        pairs = candidate_pairs(conv)
        unk = self.emotion_index[UNK_EMOTION]
        emotion_ids = [self.emotion_index.get(u.emotion, unk) for u in conv.utterances]
        bags = base = None
        if enc.mode == "hash":
            bags = [token_buckets(u.text, enc.buckets) for u in conv.utterances]
            for u, bag in zip(conv.utterances, bags):
                if not bag:
                    raise ValueError(f"{conv.id}: utterance {u.index} has empty text in hash mode")
        else:
            base = encode_base(conv.utterances, enc, self.params)
            if base.shape[1] != enc.base_dim:
                raise nx.ShapeError(f"{conv.id}: vector dim {base.shape[1]} != base_dim {enc.base_dim}")
        graph = conversation_graph(conv, self.cfg.window)
        adjacency = graph.adjacency(self.cfg.c_mode, self.cfg.c_value)
        return Prepared(
            conv=conv, pairs=pairs, emotion_ids=emotion_ids, bags=bags, base=base,
            graph=graph, adjacency=adjacency,
            o_index=np.array([p.o - 1 for p in pairs], dtype=np.int64),
            t_index=np.array([p.t - 1 for p in pairs], dtype=np.int64),
            labels=np.array([p.label for p in pairs], dtype=np.float64),
        )

    def node_features(self, prep: Prepared) -> Tensor:
        """Final per-utterance representations (after the graph stage unless ablated)."""
        base = prep.base if prep.base is not None else nx.bag_mean(self.params["encoder.buckets"], prep.bags)
        h = encode(base, prep.emotion_ids, self.cfg.encoder, self.params)
        if self.cfg.ablate_pag:
            return h
        return stack_layers(prep.graph, h, self._layers, prep.adjacency)

    def logits(self, prep: Prepared) -> Tensor | None:
        if not prep.pairs:
            return None
        h = self.node_features(prep)
        return head_logits(nx.take_rows(h, prep.o_index), nx.take_rows(h, prep.t_index),
                           self.params)

    def forward_conversation(self, conv: Conversation | Prepared) -> list[PairPrediction]:
        prep = conv if isinstance(conv, Prepared) else self.prepare(conv)
        with nx.no_grad():
            z = self.logits(prep)
        if z is None:
            return []
        probs = nx.sigmoid(z).data[:, 0]
        return [PairPrediction(prep.conv.id, p.o, p.t, float(pr), p.label)
                for p, pr in zip(prep.pairs, probs)]

    def loss_sum(self, prep: Prepared, pos_weight: float = 1.0) -> Tensor | None:
        z = self.logits(prep)
        if z is None:
            return None
        return bce_with_logits_sum(z, prep.labels, pos_weight)


def predict_corpus(model: PageModel, convs: Sequence[Conversation | Prepared]) -> list[PairPrediction]:
    out = []
    for c in convs:
        out.extend(model.forward_conversation(c))
    return out
