"""Exact-span precision/recall/F1 and the four-way error taxonomy."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .corpus import Span, TOWEInstance, decode_bio
from .towe import predict_batch

ERROR_TYPES = ("null", "under", "over", "other")


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    errors: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        head = ["P", "R", "F1", "NULL", "Under", "Over", "Others", "Total"]
        vals = [f"{100 * self.precision:.2f}", f"{100 * self.recall:.2f}", f"{100 * self.f1:.2f}"]
        vals += [str(self.errors.get(k, 0)) for k in (*ERROR_TYPES, "total")]
        widths = [max(len(h), len(v)) for h, v in zip(head, vals)]
        fmt = "  ".join("{:>%d}" % w for w in widths)
        return fmt.format(*head) + "\n" + fmt.format(*vals)


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def span_prf(pairs: Iterable[tuple[Sequence[Span], Sequence[Span]]]) -> tuple[float, float, float]:
    """Micro P/R/F1 over (gold, predicted) span sets; only exact matches count."""
    tp = n_pred = n_gold = 0
    for gold, pred in pairs:
        gold, pred = {tuple(s) for s in gold}, {tuple(s) for s in pred}
        tp += len(gold & pred)
        n_pred += len(pred)
        n_gold += len(gold)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    return p, r, f1_score(p, r)


def _inside(a: Span, b: Span) -> bool:
    return b[0] <= a[0] and a[1] <= b[1]


def classify_errors(gold: Sequence[Span], pred: Sequence[Span]) -> str:
    """One of correct / null / under / over / other.

    under: every prediction is a strict sub-span of a gold span.
    over: every gold span is covered by a prediction, with something extra.
    Checked in the order null, under, over; anything else is "other".
    """
    gold, pred = {tuple(s) for s in gold}, {tuple(s) for s in pred}
    if gold == pred:
        return "correct"
    if gold and not pred:
        return "null"
    if pred and all(any(_inside(p, g) and p != g for g in gold) for p in pred):
        return "under"
    if all(any(_inside(g, p) for p in pred) for g in gold):
        covering = {p for p in pred if any(_inside(g, p) for g in gold)}
        strict = any(_inside(g, p) and g != p for g in gold for p in pred)
        if pred - covering or strict:
            return "over"
    return "other"


def error_counts(pairs: Iterable[tuple[Sequence[Span], Sequence[Span]]]) -> dict:
    counts = dict.fromkeys(ERROR_TYPES, 0)
    for gold, pred in pairs:
        kind = classify_errors(gold, pred)
        if kind != "correct":
            counts[kind] += 1
    counts["total"] = sum(counts[k] for k in ERROR_TYPES)
    return counts


def evaluate_pairs(pairs: Sequence[tuple[Sequence[Span], Sequence[Span]]]) -> EvalReport:
    p, r, f1 = span_prf(pairs)
    records = [{"gold": [list(s) for s in g], "pred": [list(s) for s in pr]} for g, pr in pairs]
    return EvalReport(p, r, f1, error_counts(pairs), records)


def predict_pairs(model, instances: Sequence[TOWEInstance], batch_size: int = 256) -> list[tuple[list, list]]:
    was_training = model.training
    model.eval()
    try:
        preds = predict_batch(model, [x.tokens for x in instances], [x.target_span for x in instances], batch_size)
    finally:
        model.train(was_training)
    return [(x.opinion_spans, decode_bio(p.argmax_labels)) for x, p in zip(instances, preds)]


def evaluate_model(model, instances: Sequence[TOWEInstance]) -> EvalReport:
    return evaluate_pairs(predict_pairs(model, instances))


def error_table(model, instances: Sequence[TOWEInstance]) -> dict:
    return error_counts(predict_pairs(model, instances))
