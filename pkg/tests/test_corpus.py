import dataclasses
import json

import pytest

from page.corpus import (
    CorpusError,
    SyntheticSpec,
    candidate_pairs,
    conversation_from_dict,
    corpus_checksum,
    corpus_stats,
    dump_corpus,
    enumerate_pairs,
    generate_synthetic,
    parse_corpus,
    permute_labels,
    split_conversations,
    write_corpus,
)
from page.posgraph import relative_distance


def _conv_dict(emotions, causes=None, speakers=None, conv_id="c1"):
    speakers = speakers or ["A", "B"] * len(emotions)
    return {
        "id": conv_id,
        "utterances": [{"idx": i + 1, "speaker": speakers[i], "text": f"word{i} hello", "emotion": e}
                       for i, e in enumerate(emotions)],
        "causes": causes or {},
    }


def test_enumeration_hand_example():
    conv = conversation_from_dict(_conv_dict(["neutral", "joy", "neutral", "anger"], {"2": [1], "4": [4, 2]}))
    pairs = enumerate_pairs(conv)
    assert [(p.o, p.t) for p in pairs] == [(1, 2), (2, 2), (1, 4), (2, 4), (3, 4), (4, 4)]
    assert [p.label for p in pairs] == [True, False, False, True, False, True]


def test_all_neutral_has_no_pairs():
    conv = conversation_from_dict(_conv_dict(["neutral"] * 4))
    assert enumerate_pairs(conv) == []


def test_pair_count_formula():
    emotions = ["joy", "neutral", "sadness", "neutral", "anger"]
    conv = conversation_from_dict(_conv_dict(emotions))
    assert len(enumerate_pairs(conv)) == 1 + 3 + 5


def test_native_round_trip(tmp_path):
    convs = generate_synthetic(SyntheticSpec(conversations=3, seed=4))
    path = tmp_path / "c.json"
    write_corpus(path, convs)
    again = parse_corpus(path)
    assert again == convs
    assert dump_corpus(again) == path.read_text()


def test_malformed_inputs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(CorpusError):
        parse_corpus(bad)
    bad.write_text(json.dumps({"x": 1}))
    with pytest.raises(CorpusError):
        parse_corpus(bad)
    gap = _conv_dict(["joy", "joy"])
    gap["utterances"][1]["idx"] = 3
    with pytest.raises(CorpusError):
        conversation_from_dict(gap)
    with pytest.raises(CorpusError):
        conversation_from_dict(_conv_dict(["neutral", "joy"], {"1": [1]}))
    with pytest.raises(CorpusError):
        parse_corpus(bad, format="xml")


def test_future_cause_dropped_with_warning(caplog):
    conv = conversation_from_dict(_conv_dict(["joy", "joy", "neutral"], {"1": [1, 3]}))
    assert conv.causes == {1: frozenset({1})}
    assert "future cause" in caplog.text


def test_reccon_adapter(tmp_path):
    raw = {"dia1": [[
        {"turn": 1, "speaker": "A", "utterance": "I won!", "emotion": "happiness",
         "expanded emotion cause evidence": [1]},
        {"turn": 2, "speaker": "B", "utterance": "Nice.", "emotion": "neutral"},
        {"turn": 3, "speaker": "A", "utterance": "So happy", "emotion": "happiness",
         "expanded emotion cause evidence": [1, "b", 3]},
    ]]}
    path = tmp_path / "r.json"
    path.write_text(json.dumps(raw))
    (conv,) = parse_corpus(path, format="reccon")
    assert conv.id == "dia1" and conv.speakers == ["A", "B", "A"]
    assert conv.causes == {1: frozenset({1}), 3: frozenset({1, 3})}
    stats = corpus_stats([conv])
    assert (stats.positive_pairs, stats.negative_pairs) == (3, 1)


def test_file_pairs_override_and_strict():
    d = _conv_dict(["joy", "joy"], {"2": [1]})
    d["pairs"] = [[1, 2, 1], [2, 2, 0]]
    conv = conversation_from_dict(d)
    assert [(p.o, p.t, p.label) for p in candidate_pairs(conv, strict=True)] == [(1, 2, True), (2, 2, False)]
    d["pairs"] = [[1, 2, 0]]
    with pytest.raises(CorpusError):
        candidate_pairs(conversation_from_dict(d), strict=True)


def test_split_is_seeded_and_keeps_training():
    convs = generate_synthetic(SyntheticSpec(conversations=20, seed=0))
    a = split_conversations(convs, 0.15, 3)
    b = split_conversations(convs, 0.15, 3)
    assert a == b
    assert len(a[1]) == 3 and len(a[0]) == 17
    assert split_conversations(convs[:1], 0.5, 0)[0] == convs[:1]


def test_permute_labels_preserves_counts():
    convs = generate_synthetic(SyntheticSpec(conversations=5, seed=2))
    perm = permute_labels(convs, 0)
    for c, p in zip(convs, perm):
        a, b = candidate_pairs(c), candidate_pairs(p)
        assert [(x.o, x.t) for x in a] == [(x.o, x.t) for x in b]
        assert sum(x.label for x in a) == sum(x.label for x in b)


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(conversations=10, seed=11)
    assert corpus_checksum(generate_synthetic(spec)) == corpus_checksum(generate_synthetic(spec))
    assert corpus_checksum(generate_synthetic(spec)) != corpus_checksum(
        generate_synthetic(dataclasses.replace(spec, seed=12)))


def test_synthetic_fixed_distance_one():
    spec = SyntheticSpec(conversations=30, cause_distances=(1,), distance_weights=(1.0,), seed=5)
    n = 0
    for conv in generate_synthetic(spec):
        sp = conv.speakers
        for t, causes in conv.causes.items():
            for o in causes:
                assert abs(relative_distance(o, t, sp[o - 1], sp[t - 1])) == 1
                n += 1
    assert n > 0


def test_synthetic_positive_rate_in_band():
    s = corpus_stats(generate_synthetic(SyntheticSpec(conversations=100, seed=0)))
    rate = s.positive_pairs / (s.positive_pairs + s.negative_pairs)
    assert 0.10 <= rate <= 0.20


def test_synthetic_spec_validation():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(cause_distances=(1, 2), distance_weights=(1.0,)))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(min_utterances=5, max_utterances=3))
