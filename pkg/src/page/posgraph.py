"""Speaker-aware relative positions, window-clipped relations, conversation graphs.

Distances are exact :class:`fractions.Fraction` values; same-speaker turns an
odd number of steps apart give half-integers, which stay distinct relation ids.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

FUTURE = Fraction(1)


def relative_distance(o: int, t: int, speaker_o, speaker_t) -> Fraction:
    """Relative distance from utterance ``o`` to target ``t`` (1-based)."""
    if o < 1 or t < 1:
        raise ValueError(f"utterance indices are 1-based, got o={o}, t={t}")
    if speaker_o == speaker_t:
        return Fraction(o - t, 2)
    if abs(t - o) == 1:
        return Fraction(-1)
    return Fraction(o - t - 1, 2)


def relation(o: int, t: int, distance: Fraction, window: int) -> Fraction:
    """Clip ``distance`` to the window; every later utterance shares relation 1."""
    if o > t:
        return FUTURE
    if distance < -window:
        return Fraction(-window)
    return Fraction(distance)


def relation_vocabulary(window: int) -> list[Fraction]:
    """All ids :func:`relation` can emit for ``o != t``: -w, -w+1/2, ..., -1/2, 1."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    return [Fraction(-n, 2) for n in range(2 * window, 0, -1)] + [FUTURE]


def relation_key(r: Fraction) -> str:
    return str(r)


@dataclass(frozen=True)
class Edge:
    source: int  # o, 1-based
    target: int  # t, 1-based
    relation: Fraction


@dataclass
class ConversationGraph:
    k: int
    edges: list[Edge]
    window: int
    features: np.ndarray | None = None
    labels: list[str] | None = None

    def neighbors(self) -> dict[tuple[int, Fraction], list[int]]:
        """In-neighbors grouped by (target, relation)."""
        groups: dict[tuple[int, Fraction], list[int]] = {}
        for e in self.edges:
            groups.setdefault((e.target, e.relation), []).append(e.source)
        return groups

    def relations(self) -> list[Fraction]:
        return sorted({e.relation for e in self.edges})

    def adjacency(self, c_mode: str = "fixed", c_value: float = 2.0) -> dict[Fraction, np.ndarray]:
        """Per-relation k x k matrices ``A[t, o] = 1 / c_{t,r}`` over edges o -> t."""
        mats: dict[Fraction, np.ndarray] = {}
        for (t, r), sources in self.neighbors().items():
            if c_mode == "fixed":
                c = c_value
            elif c_mode == "degree":
                c = float(len(sources))
            else:
                raise ValueError(f"unknown normalisation mode {c_mode!r}")
            a = mats.setdefault(r, np.zeros((self.k, self.k)))
            for o in sources:
                a[t - 1, o - 1] += 1.0 / c
        return mats


def build_graph(speakers: Sequence, window: int, node_features=None,
                labels: Sequence[str] | None = None) -> ConversationGraph:
    """Fully connected typed digraph over the utterances, no self loops.

    Edges are ordered by target then source.
    """
    k = len(speakers)
    if node_features is not None and len(node_features) != k:
        raise ValueError(f"feature rows ({len(node_features)}) != utterance count ({k})")
    edges = []
    for t in range(1, k + 1):
        for o in range(1, k + 1):
            if o == t:
                continue
            d = relative_distance(o, t, speakers[o - 1], speakers[t - 1])
            edges.append(Edge(o, t, relation(o, t, d, window)))
    feats = None if node_features is None else np.asarray(node_features)
    return ConversationGraph(k, edges, window, feats, list(labels) if labels is not None else None)


def conversation_graph(conv, window: int, node_features=None) -> ConversationGraph:
    labels = [f"{u.speaker}:{u.emotion}" for u in conv.utterances]
    return build_graph(conv.speakers, window, node_features, labels)


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(graph: ConversationGraph, name: str = "conversation") -> str:
    lines = [f"digraph {_dot_quote(name)} {{"]
    for i in range(1, graph.k + 1):
        label = _dot_quote(f"u{i}")
        if graph.labels is not None:
            # \n is DOT's line break; escape the user text, not the break
            label = label[:-1] + "\\n" + _dot_quote(graph.labels[i - 1])[1:]
        lines.append(f"  u{i} [label={label}];")
    for e in graph.edges:
        lines.append(f"  u{e.source} -> u{e.target} [label={_dot_quote(relation_key(e.relation))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(graph: ConversationGraph) -> str:
    nodes = [{"id": i, "label": graph.labels[i - 1] if graph.labels else None}
             for i in range(1, graph.k + 1)]
    edges = [{"source": e.source, "target": e.target, "relation": relation_key(e.relation)}
             for e in graph.edges]
    return json.dumps({"window": graph.window, "nodes": nodes, "edges": edges}, indent=1)
