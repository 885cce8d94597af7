"""Relational graph convolution over conversation graphs."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import Tensor
from .posgraph import ConversationGraph, relation_key, relation_vocabulary


class MissingRelationError(KeyError):
    pass


@dataclass
class RgcnLayer:
    relation_weights: dict[Fraction, Tensor]
    self_weight: Tensor
    c_mode: str = "fixed"   # "fixed" -> c_{t,r} = c_value; "degree" -> |N_t^r|
    c_value: float = 2.0

    def __post_init__(self):
        if self.c_mode == "fixed" and self.c_value <= 0:
            raise ValueError("normalisation constant must be positive")


def layer_param_names(index: int, window: int) -> list[str]:
    names = [f"rgcn.{index}.W_0"]
    names += [f"rgcn.{index}.W_r[{relation_key(r)}]" for r in relation_vocabulary(window)]
    return names


def init_rgcn_params(d_u: int, window: int, layers: int, rng: np.random.Generator
                     ) -> dict[str, Tensor]:
    if layers < 1:
        raise ValueError("need at least one R-GCN layer")
    p = {}
    for i in range(layers):
        for name in layer_param_names(i, window):
            p[name] = nx.parameter(nx.glorot_uniform(rng, d_u, d_u), name=name)
    return p


def layers_from_params(params: dict[str, Tensor], window: int, layers: int,
                       c_mode: str = "fixed", c_value: float = 2.0) -> list[RgcnLayer]:
    out = []
    for i in range(layers):
        rel = {r: params[f"rgcn.{i}.W_r[{relation_key(r)}]"] for r in relation_vocabulary(window)}
        out.append(RgcnLayer(rel, params[f"rgcn.{i}.W_0"], c_mode, c_value))
    return out


def rgcn_forward(graph: ConversationGraph, h: Tensor, layer: RgcnLayer,
                 adjacency: dict[Fraction, np.ndarray] | None = None) -> Tensor:
    """``sigmoid(sum_r A_r H W_r + H W_0)`` with ``A_r[t, o] = 1 / c_{t,r}``.

    ``adjacency`` may be passed in to reuse a precomputed normalisation.
    """
    if h.shape[0] != graph.k:
        raise nx.ShapeError(f"graph has {graph.k} nodes but features have {h.shape[0]} rows")
    if adjacency is None:
        adjacency = graph.adjacency(layer.c_mode, layer.c_value)
    total = nx.matmul(h, layer.self_weight)
    for r in sorted(adjacency):
        if r not in layer.relation_weights:
            raise MissingRelationError(f"no weight for relation {relation_key(r)}")
        msg = nx.matmul(nx.Tensor(adjacency[r]), h)
        total = nx.add(total, nx.matmul(msg, layer.relation_weights[r]))
    return nx.sigmoid(total)


def stack_layers(graph: ConversationGraph, h: Tensor, layers: Sequence[RgcnLayer],
                 adjacency: dict[Fraction, np.ndarray] | None = None) -> Tensor:
    if not layers:
        raise ValueError("need at least one layer")
    for layer in layers:
        adj = adjacency
        if adj is None or layer.c_mode != layers[0].c_mode or layer.c_value != layers[0].c_value:
            adj = graph.adjacency(layer.c_mode, layer.c_value)
        h = rgcn_forward(graph, h, layer, adj)
    return h
