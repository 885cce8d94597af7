"""Utterance encoder: base vector, projection, emotion fusion, self-attention, residual MLP."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import Tensor

UNK_EMOTION = "<unk>"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EncoderConfig:
    d_u: int = 300
    d_e: int = 100
    heads: int = 6
    mode: str = "hash"          # "hash" | "precomputed"
    buckets: int = 16384
    base_dim: int = 128         # hash-embedding width; precomputed mode reads it from the data
    mlp_hidden: int = 300
    learned_qkv: bool = False

    def validate(self) -> None:
        for name in ("d_u", "d_e", "heads", "buckets", "base_dim", "mlp_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_u % self.heads:
            raise ValueError(f"d_u={self.d_u} is not divisible by heads={self.heads}")
        if self.mode not in ("hash", "precomputed"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")


def fnv1a_64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def token_buckets(text: str, buckets: int) -> list[int]:
    return [fnv1a_64(tok) % buckets for tok in tokenize(text)]


def init_encoder_params(cfg: EncoderConfig, n_emotions: int, rng: np.random.Generator
                        ) -> dict[str, Tensor]:
    cfg.validate()
    p: dict[str, Tensor] = {}
    if cfg.mode == "hash":
        p["encoder.buckets"] = nx.parameter(nx.normal_init(rng, (cfg.buckets, cfg.base_dim)))
    p["encoder.W_u"] = nx.parameter(nx.glorot_uniform(rng, cfg.base_dim, cfg.d_u))
    p["encoder.emotion"] = nx.parameter(nx.normal_init(rng, (n_emotions, cfg.d_e)))
    p["encoder.W_fuse"] = nx.parameter(nx.glorot_uniform(rng, cfg.d_e + cfg.d_u, cfg.d_u))
    p["encoder.b_fuse"] = nx.parameter(np.zeros(cfg.d_u))
    if cfg.learned_qkv:
        for m in ("W_q", "W_k", "W_v"):
            p[f"encoder.{m}"] = nx.parameter(nx.glorot_uniform(rng, cfg.d_u, cfg.d_u))
    p["encoder.mlp.W1"] = nx.parameter(nx.glorot_uniform(rng, cfg.d_u, cfg.mlp_hidden))
    p["encoder.mlp.b1"] = nx.parameter(np.zeros(cfg.mlp_hidden))
    p["encoder.mlp.W2"] = nx.parameter(nx.glorot_uniform(rng, cfg.mlp_hidden, cfg.d_u))
    p["encoder.mlp.b2"] = nx.parameter(np.zeros(cfg.d_u))
    for name, t in p.items():
        t.name = name
    return p


def encode_base(utterances: Sequence, cfg: EncoderConfig, params: dict[str, Tensor]) -> Tensor:
    """Stand-in for the contextual word encoder: one base vector per utterance.

    Hash mode averages learned bucket embeddings of lowercased whitespace
    tokens, so token order is ignored.  Precomputed mode passes the supplied
    vectors through unchanged.
    """
    if cfg.mode == "precomputed":
        vecs = []
        for u in utterances:
            if u.vector is None:
                raise ValueError(f"utterance {u.index} has no precomputed vector")
            vecs.append(u.vector)
        return Tensor(np.asarray(vecs, dtype=np.float64).reshape(len(vecs), -1))
    bags = []
    for u in utterances:
        bag = token_buckets(u.text, cfg.buckets)
        if not bag:
            raise ValueError(f"utterance {u.index} has empty text; hash mode needs tokens "
                             "(use precomputed mode for vector-only data)")
        bags.append(bag)
    return bag_embed(params["encoder.buckets"], bags)


def bag_embed(table: Tensor, bags: Sequence[Sequence[int]]) -> Tensor:
    return nx.bag_mean(table, bags)


def project_utterance(h_base: Tensor, w_u: Tensor) -> Tensor:
    if h_base.shape[-1] != w_u.shape[0]:
        raise nx.ShapeError(f"base dim {h_base.shape[-1]} does not match projection {w_u.shape}")
    return nx.matmul(h_base, w_u)


def fuse_emotion(h_u: Tensor, emotion_ids: Sequence[int], params: dict[str, Tensor]) -> Tensor:
    """Concatenate emotion embeddings with ``h_u`` and map back to ``d_u``."""
    h_e = nx.take_rows(params["encoder.emotion"], emotion_ids)
    h_c = nx.concat([h_e, h_u], axis=1)
    return nx.add(nx.matmul(h_c, params["encoder.W_fuse"]), params["encoder.b_fuse"])


def self_attend(h_c: Tensor, heads: int, params: dict[str, Tensor] | None = None,
                learned_qkv: bool = False, return_weights: bool = False):
    """Multi-head self-attention over the utterances of one conversation.

    Each head works on its own ``d_u / heads`` column slice.  Without learned
    maps the slice itself is query, key and value.  Scores are scaled by
    ``sqrt(d_u)`` of the full width.
    """
    k, d_u = h_c.shape
    if k < 1:
        raise ValueError("self_attend needs at least one utterance")
    width = d_u // heads
    scale = 1.0 / math.sqrt(d_u)
    if learned_qkv:
        q_all = nx.matmul(h_c, params["encoder.W_q"])
        k_all = nx.matmul(h_c, params["encoder.W_k"])
        v_all = nx.matmul(h_c, params["encoder.W_v"])
    else:
        q_all = k_all = v_all = h_c
    outs, weights = [], []
    for n in range(heads):
        lo, hi = n * width, (n + 1) * width
        q = nx.columns(q_all, lo, hi)
        kk = q if k_all is q_all else nx.columns(k_all, lo, hi)
        v = q if v_all is q_all else nx.columns(v_all, lo, hi)
        a = nx.softmax_rows(nx.scale(nx.matmul(q, nx.transpose(kk)), scale))
        weights.append(a)
        outs.append(nx.matmul(a, v))
    h_a = nx.concat(outs, axis=1) if heads > 1 else outs[0]
    return (h_a, weights) if return_weights else h_a


def residual_block(h_a: Tensor, h_c: Tensor, params: dict[str, Tensor]) -> Tensor:
    if h_a.shape != h_c.shape:
        raise nx.ShapeError(f"residual inputs differ: {h_a.shape} vs {h_c.shape}")
    x = nx.add(h_a, h_c)
    hidden = nx.relu(nx.add(nx.matmul(x, params["encoder.mlp.W1"]), params["encoder.mlp.b1"]))
    out = nx.add(nx.matmul(hidden, params["encoder.mlp.W2"]), params["encoder.mlp.b2"])
    return nx.add(nx.sigmoid(out), x)


def encode(base: Tensor, emotion_ids: Sequence[int], cfg: EncoderConfig,
           params: dict[str, Tensor]) -> Tensor:
    """Base vectors -> node features ``H_n`` (k x d_u)."""
    h_u = project_utterance(base, params["encoder.W_u"])
    h_c = fuse_emotion(h_u, emotion_ids, params)
    h_a = self_attend(h_c, cfg.heads, params, cfg.learned_qkv)
    return residual_block(h_a, h_c, params)
