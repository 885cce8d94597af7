"""Shared fixtures for the end-to-end checks and the acceptance experiments."""
from __future__ import annotations

import dataclasses

import numpy as np

from gradcheck import check_all
from page.corpus import Conversation, SyntheticSpec, Utterance, generate_synthetic
from page.encoder import EncoderConfig
from page.harness import TrainConfig
from page.model import ModelConfig, PageModel, with_emotions

# --- tiny end-to-end gradient setting: k=3, d_u=8, 2 heads, w=2, one layer

TINY_CONV = Conversation(
    "tiny",
    (Utterance(1, "A", "the game was great", "happiness"),
     Utterance(2, "A", "we won it", "neutral"),
     Utterance(3, "B", "great news indeed", "happiness")),
    {1: frozenset({1}), 3: frozenset({1, 2})},
)


def tiny_model(seed: int = 0) -> PageModel:
    enc = EncoderConfig(d_u=8, d_e=4, heads=2, buckets=16, base_dim=4, mlp_hidden=8)
    cfg = with_emotions(ModelConfig(encoder=enc, window=2, layers=1, cls_hidden=8),
                        ["happiness", "neutral"])
    return PageModel(cfg, seed=seed)


def end_to_end_gradient_errors(seed: int = 0) -> dict[str, float]:
    model = tiny_model(seed)
    # push weights off their init so no unit sits exactly at a ReLU kink
    rng = np.random.default_rng(seed + 100)
    for p in model.parameters():
        p.data[...] += rng.normal(scale=0.1, size=p.shape)
    prep = model.prepare(TINY_CONV)
    return check_all(lambda: model.loss_sum(prep), model.parameters())


# --- synthetic experiment settings

SMALL_ENCODER = EncoderConfig(d_u=32, d_e=8, heads=2, buckets=4096, base_dim=32, mlp_hidden=32)


def experiment_config(**train_kw) -> TrainConfig:
    kw = dict(epochs=40, lr=3e-3, patience=10)
    kw.update(train_kw)
    return TrainConfig(model=ModelConfig(encoder=SMALL_ENCODER, cls_hidden=32), **kw)


def planted_corpus(conversations: int = 200, seed: int = 1, **spec_kw) -> list[Conversation]:
    return generate_synthetic(SyntheticSpec(conversations=conversations, seed=seed, **spec_kw))


def planted_train_test():
    """Training corpus plus an independent held-out corpus from another seed."""
    return planted_corpus(200, seed=1), planted_corpus(60, seed=99)


def with_window(cfg: TrainConfig, w: int) -> TrainConfig:
    return dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, window=w))
