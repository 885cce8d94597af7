"""Acceptance criteria.  Each test records a PASS/FAIL/SKIP line in the run summary.

The RECCON count check needs the public annotation files.  Point
``PAGE_RECCON_DIR`` at a directory holding ``dailydialog_test.json`` and
``iemocap_test.json`` (RECCON's ``data/original_annotation``); without them
the check is skipped.
"""
from __future__ import annotations

import os
import time
from fractions import Fraction
from pathlib import Path

import pytest

import verdicts
from oracles import doubled_distance, doubled_relation, speaker_patterns
from page.cli import main as cli_main
from page.corpus import corpus_stats, parse_corpus
from page.harness import f1_scores, run_ablation, train, window_sweep
from page.posgraph import relation, relative_distance
from scenarios import (
    end_to_end_gradient_errors,
    experiment_config,
    planted_corpus,
    planted_train_test,
)


def _confusion_for(pos_pct: float, neg_pct: float, limit: int = 400):
    """Smallest confusion counts whose F1s round to the given percentages."""
    for total_err in range(1, limit):
        for tp in range(1, limit):
            pos = 2 * tp / (2 * tp + total_err)
            if round(100 * pos, 2) != pos_pct:
                continue
            for tn in range(1, 20 * limit):
                neg = 2 * tn / (2 * tn + total_err)
                if round(100 * neg, 2) == neg_pct:
                    return tp, total_err // 2, total_err - total_err // 2, tn
                if 100 * neg > neg_pct + 0.01:
                    break
    raise AssertionError("no confusion matrix found")


def test_metric_identity():
    tp, fp, fn, tn = _confusion_for(64.28, 88.74)
    preds = [1] * tp + [1] * fp + [0] * fn + [0] * tn
    gold = [1] * tp + [0] * fp + [1] * fn + [0] * tn
    r = f1_scores(preds, gold)
    macro = 100 * r.macro_f1
    ok = round(100 * r.pos_f1, 2) == 64.28 and round(100 * r.neg_f1, 2) == 88.74 and abs(macro - 76.51) <= 0.01
    verdicts.record("metric identity", ok,
                    f"confusion tp={tp} fp={fp} fn={fn} tn={tn}: Pos {100 * r.pos_f1:.2f} "
                    f"Neg {100 * r.neg_f1:.2f} Macro {macro:.4f} (target 76.51 +/- 0.01)")
    assert ok


def test_position_formula_oracle():
    start = time.perf_counter()
    mismatches = cases = 0
    for w in (1, 2, 3, 4):
        for k in range(1, 8):
            for sp in speaker_patterns(k):
                for t in range(1, k + 1):
                    for o in range(1, k + 1):
                        same = sp[o - 1] == sp[t - 1]
                        d = relative_distance(o, t, sp[o - 1], sp[t - 1])
                        cases += 1
                        if 2 * d != doubled_distance(o, t, same) or \
                                2 * relation(o, t, d, w) != doubled_relation(o, t, same, w):
                            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 1.0
    verdicts.record("position-formula oracle", ok,
                    f"{mismatches} mismatches over {cases} cases in {elapsed:.2f}s")
    assert ok


def test_alternating_five_configuration():
    sp = ["A", "B", "A", "B", "A"]
    d35 = relative_distance(3, 5, sp[2], sp[4])
    d45 = relative_distance(4, 5, sp[3], sp[4])
    r35, r45 = relation(3, 5, d35, 1), relation(4, 5, d45, 1)
    ok = d35 == d45 == Fraction(-1) and r35 == r45
    verdicts.record("alternating k=5 configuration", ok, f"D35={d35} D45={d45} r35={r35} r45={r45}")
    assert ok


def test_gradient_suite():
    start = time.perf_counter()
    errors = end_to_end_gradient_errors()
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 10
    verdicts.record("gradient suite", ok,
                    f"{len(errors)} parameter tensors, worst {worst} rel err {errors[worst]:.2e}, "
                    f"{elapsed:.1f}s")
    assert ok


def test_capacity():
    start = time.perf_counter()
    convs = planted_corpus(16, seed=7)
    result = train(convs, experiment_config(epochs=200))
    elapsed = time.perf_counter() - start
    pos = result.train_report.pos_f1
    ok = pos >= 0.95 and elapsed < 120
    verdicts.record("capacity", ok, f"training Pos F1 {pos:.4f} (need >= 0.95) after "
                    f"{len(result.log) - 1} epochs, {elapsed:.0f}s")
    assert ok


def test_ablation_direction():
    start = time.perf_counter()
    train_convs, test_convs = planted_train_test()
    res = run_ablation(train_convs, experiment_config(), seeds=range(5), test_convs=test_convs)
    elapsed = time.perf_counter() - start
    ok = res.gap >= 0.05 and elapsed < 600
    verdicts.record("graph ablation", ok,
                    f"full {100 * res.full.mean:.2f}+/-{100 * res.full.std:.2f} vs without graph "
                    f"{100 * res.ablated.mean:.2f}+/-{100 * res.ablated.std:.2f} Macro F1, "
                    f"gap {100 * res.gap:.2f} points (need >= 5), {elapsed:.0f}s")
    assert ok


def test_window_sweep_shape():
    start = time.perf_counter()
    train_convs, test_convs = planted_train_test()
    rows = {r.window: r for r in window_sweep(train_convs, experiment_config(), [1, 2, 3, 4, 5],
                                              seeds=range(5), test_convs=test_convs)}
    elapsed = time.perf_counter() - start
    m = {w: r.mean_macro_f1 for w, r in rows.items()}
    ok = m[3] > m[1] and m[3] > m[5] and elapsed < 1200
    curve = " ".join(f"w{w}={100 * v:.2f}" for w, v in sorted(m.items()))
    verdicts.record("window sweep", ok, f"{curve} (need w3 > w1 and w3 > w5), {elapsed:.0f}s")
    assert ok


RECCON_EXPECTED = {
    "dailydialog_test.json": (225, 2405, 1894, 26814),
    "iemocap_test.json": (16, 665, 1080, 11305),
}


@pytest.mark.parametrize("name", sorted(RECCON_EXPECTED))
def test_reccon_counts(name):
    root = os.environ.get("PAGE_RECCON_DIR")
    path = Path(root) / name if root else None
    label = f"RECCON counts {name}"
    if path is None or not path.exists():
        verdicts.record(label, None, "annotation file not present (set PAGE_RECCON_DIR)")
        pytest.skip("RECCON data not available")
    s = corpus_stats(parse_corpus(path, format="reccon"))
    got = (s.conversations, s.utterances, s.positive_pairs, s.negative_pairs)
    ok = got == RECCON_EXPECTED[name]
    verdicts.record(label, ok, f"got {got}, expected {RECCON_EXPECTED[name]}")
    assert ok


def test_determinism(tmp_path):
    corpus = tmp_path / "c.json"
    assert cli_main(["synth", "--out", str(corpus), "--conversations", "10", "--seed", "3"]) == 0
    flags = ["--d-u", "16", "--d-e", "4", "--heads", "2", "--buckets", "256", "--base-dim", "16",
             "--cls-hidden", "16", "--epochs", "3", "--seed", "11"]
    for run in ("a", "b"):
        assert cli_main(["train", "--data", str(corpus), "--out", str(tmp_path / run), *flags]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    ok = a == b
    verdicts.record("determinism", ok, f"metrics CSVs {'byte-identical' if ok else 'differ'} "
                    f"({len(a)} bytes)")
    assert ok
