import json

import numpy as np
import pytest

import oracles
from opinion_ssl.evaluation import classify_errors, error_counts, evaluate_pairs, span_prf

TAXONOMY = [
    ([(2, 4)], [], "null"),
    ([(2, 4)], [(2, 3)], "under"),
    ([(2, 4)], [(2, 4), (6, 7)], "over"),
    ([(2, 4)], [(5, 6)], "other"),
    ([(2, 4)], [(2, 4)], "correct"),
    ([], [], "correct"),
]


@pytest.mark.parametrize("gold, pred, kind", TAXONOMY)
def test_classify_examples(gold, pred, kind):
    assert classify_errors(gold, pred) == kind


def test_taxonomy_counts():
    counts = error_counts([(g, p) for g, p, _ in TAXONOMY])
    assert counts == {"null": 1, "under": 1, "over": 1, "other": 1, "total": 4}


def test_more_taxonomy_cases():
    assert classify_errors([(2, 4)], [(1, 4)]) == "over"  # strict containment
    assert classify_errors([], [(1, 2)]) == "over"  # nothing to extract, something extracted
    assert classify_errors([(2, 4), (6, 8)], [(2, 3)]) == "under"
    assert classify_errors([(2, 4), (6, 8)], [(2, 4)]) == "other"


def test_prf_examples():
    assert span_prf([([(0, 1)], [(0, 1)]), ([(2, 4)], [(2, 4)])]) == (1.0, 1.0, 1.0)
    assert span_prf([([(2, 4)], [(2, 3)])]) == (0.0, 0.0, 0.0)
    p, r, f = span_prf([([(0, 1)], [(0, 1)]), ([(2, 4)], [(2, 4), (5, 6)])])
    assert (p, r, f) == pytest.approx((2 / 3, 1.0, 0.8))
    assert span_prf([([], [])]) == (0.0, 0.0, 0.0)


def random_spans(rng, n=8):
    cuts = sorted(set(rng.integers(0, n + 1, size=int(rng.integers(0, 6))).tolist()))
    return [(a, b) for a, b in zip(cuts[::2], cuts[1::2]) if a < b]


def test_prf_brute_force_and_permutation():
    rng = np.random.default_rng(0)
    pairs = [(random_spans(rng), random_spans(rng)) for _ in range(50)]
    assert span_prf(pairs) == oracles.span_prf(pairs)
    shuffled = [pairs[i] for i in rng.permutation(len(pairs))]
    assert span_prf(shuffled) == pytest.approx(span_prf(pairs))


def test_report_invariants():
    rng = np.random.default_rng(1)
    pairs = [(random_spans(rng), random_spans(rng)) for _ in range(100)]
    rep = evaluate_pairs(pairs)
    f1 = 2 * rep.precision * rep.recall / (rep.precision + rep.recall) if rep.precision + rep.recall else 0.0
    assert rep.f1 == pytest.approx(f1)
    assert rep.errors["total"] == sum(set(map(tuple, g)) != set(map(tuple, p)) for g, p in pairs)
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"precision", "recall", "f1", "errors"}
    assert "NULL" in rep.table()
