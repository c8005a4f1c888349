"""Data model, file formats, train/valid splitting and batch sampling.

Labeled records are JSONL, one opinion target per line::

    {"tokens": [...], "target_span": [s, e], "opinion_spans": [[s, e], ...]}

A record may carry ``"labels"`` (BIO tags) instead of ``"opinion_spans"``, or a
``"targets"`` list of ``{"target_span", "opinion_spans"}`` objects when one
sentence holds several targets; either way every target becomes its own
:class:`TOWEInstance`.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TAGS = ("B", "I", "O")
TAG2ID = {t: i for i, t in enumerate(TAGS)}

Span = tuple[int, int]


class CorpusError(ValueError):
    """Raised for malformed or invalid corpus data."""


@dataclass(frozen=True)
class TOWEInstance:
    tokens: tuple[str, ...]
    target_span: Span
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "target_span", tuple(self.target_span))
        object.__setattr__(self, "labels", tuple(self.labels))
        n = len(self.tokens)
        if n < 1:
            raise CorpusError("instance has no tokens")
        _check_span(self.target_span, n, "target_span")
        if len(self.labels) != n:
            raise CorpusError(f"{len(self.labels)} labels for {n} tokens")
        bad = [t for t in self.labels if t not in TAG2ID]
        if bad:
            raise CorpusError(f"unknown tags {sorted(set(bad))}")
        s, e = self.target_span
        if any(t != "O" for t in self.labels[s:e]):
            raise CorpusError("target tokens must be tagged O")

    @property
    def opinion_spans(self) -> list[Span]:
        return decode_bio(self.labels)

    def is_well_formed(self) -> bool:
        return all(
            tag != "I" or (i > 0 and self.labels[i - 1] in ("B", "I"))
            for i, tag in enumerate(self.labels)
        )

    def to_record(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "target_span": list(self.target_span),
            "opinion_spans": [list(s) for s in self.opinion_spans],
        }


@dataclass(frozen=True)
class UnlabeledInstance:
    tokens: tuple[str, ...]
    target_span: Span
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "target_span", tuple(self.target_span))
        if not self.tokens:
            raise CorpusError("instance has no tokens")
        _check_span(self.target_span, len(self.tokens), "target_span")

    def to_record(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "target_span": list(self.target_span),
            "source_id": self.source_id,
        }


@dataclass(frozen=True)
class DatasetSplit:
    train: list[TOWEInstance]
    valid: list[TOWEInstance]
    split_seed: int


def _check_span(span, n: int, what: str) -> None:
    if len(span) != 2:
        raise CorpusError(f"{what} must be a [start, end) pair, got {span!r}")
    s, e = span
    if not (isinstance(s, int) and isinstance(e, int)) or not 0 <= s < e <= n:
        raise CorpusError(f"{what} {list(span)} out of range for {n} tokens")


# ---------------------------------------------------------------------------
# BIO


def encode_bio(n: int, spans: Sequence[Span]) -> list[str]:
    labels = ["O"] * n
    for s, e in sorted(tuple(sp) for sp in spans):
        _check_span((s, e), n, "span")
        if any(t != "O" for t in labels[s:e]):
            raise CorpusError(f"overlapping span [{s}, {e})")
        labels[s] = "B"
        for i in range(s + 1, e):
            labels[i] = "I"
    return labels


def decode_bio(labels: Sequence[str]) -> list[Span]:
    """Maximal B I* runs as sorted half-open spans.

    An I after O (or at position 0) opens a new span, so decoding is total.
    """
    spans: list[Span] = []
    start = None
    for i, tag in enumerate(labels):
        if tag == "B" or (tag == "I" and start is None):
            if start is not None:
                spans.append((start, i))
            start = i
        elif tag != "I":
            if start is not None:
                spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(labels)))
    return spans


# ---------------------------------------------------------------------------
# file formats


def _instances_from_record(rec: dict) -> list[TOWEInstance]:
    tokens = rec["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusError("tokens must be a list of strings")
    targets = rec["targets"] if "targets" in rec else [rec]
    out = []
    for tgt in targets:
        span = tuple(tgt["target_span"])
        _check_span(span, len(tokens), "target_span")
        if "labels" in tgt:
            labels = tgt["labels"]
        else:
            labels = encode_bio(len(tokens), [tuple(s) for s in tgt.get("opinion_spans", [])])
        out.append(TOWEInstance(tokens, span, labels))
    return out


def load_labeled(path) -> list[TOWEInstance]:
    instances = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: cannot parse JSON ({exc.msg})") from exc
            try:
                new = _instances_from_record(rec)
            except (KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{line_no}: malformed record ({exc!r})") from exc
            except CorpusError as exc:
                raise CorpusError(f"{path}:{line_no}: {exc}") from exc
            for inst in new:
                if not inst.is_well_formed():
                    logger.warning("%s:%d: I tag without preceding B", path, line_no)
            instances.extend(new)
    return instances


def dump_labeled(instances: Sequence[TOWEInstance], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


_TOKEN_RE = re.compile(r"\w+(?:['\-]\w+)*|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with punctuation detached from words."""
    return _TOKEN_RE.findall(text)


def load_raw(path, max_len: int | None = None) -> list[list[str]]:
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: invalid UTF-8 at byte offset {exc.start}") from exc
    out = []
    too_long = 0
    for line in text.splitlines():
        toks = tokenize(line)
        if not toks:
            continue
        if max_len is not None and len(toks) > max_len:
            too_long += 1
            continue
        out.append(toks)
    if too_long:
        logger.info("dropped %d raw sentences longer than %d tokens", too_long, max_len)
    return out


def load_unlabeled(path) -> tuple[dict, list[UnlabeledInstance]]:
    """Read a pseudo-target cache: a header line followed by instances."""
    header: dict = {}
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
                continue
            try:
                out.append(UnlabeledInstance(rec["tokens"], tuple(rec["target_span"]), str(rec.get("source_id", ""))))
            except (KeyError, CorpusError) as exc:
                raise CorpusError(f"{path}:{line_no}: {exc}") from exc
    return header, out


def dump_unlabeled(instances: Sequence[UnlabeledInstance], path, header: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for inst in instances:
            f.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# splitting and batching


def group_by_sentence(instances: Sequence[TOWEInstance]) -> list[list[TOWEInstance]]:
    groups: dict[tuple[str, ...], list[TOWEInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.tokens, []).append(inst)
    return list(groups.values())


def split_train_valid(instances: Sequence[TOWEInstance], seed: int, valid_fraction: float = 0.2) -> DatasetSplit:
    """Random sentence-level split; every target of a sentence lands on one side."""
    groups = group_by_sentence(instances)
    if len(groups) < 5:
        raise CorpusError(f"need at least 5 sentences to split, got {len(groups)}")
    n_valid = math.floor(valid_fraction * len(groups) + 0.5)
    order = np.random.default_rng(seed).permutation(len(groups))
    valid_idx = set(order[:n_valid].tolist())
    train, valid = [], []
    for i, g in enumerate(groups):
        (valid if i in valid_idx else train).extend(g)
    return DatasetSplit(train, valid, seed)


@dataclass
class BatchStream:
    """Endless stream of (labeled batch, unlabeled batch) pairs.

    The labeled pool is visited without replacement once per epoch
    (``steps_per_epoch`` steps); the unlabeled pool is reshuffled
    independently every time it runs out.
    """

    labeled: Sequence
    unlabeled: Sequence
    labeled_batch: int = 16
    unlabeled_batch: int = 96
    seed: int = 0
    _lab_order: list = field(default_factory=list, repr=False)
    _unl_order: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        lab_ss, unl_ss = np.random.SeedSequence(self.seed).spawn(2)
        self._lab_rng = np.random.default_rng(lab_ss)
        self._unl_rng = np.random.default_rng(unl_ss)

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.labeled) / self.labeled_batch)

    def _next_labeled(self) -> list:
        if not self._lab_order:
            self._lab_order = self._lab_rng.permutation(len(self.labeled)).tolist()
        idx, self._lab_order = self._lab_order[: self.labeled_batch], self._lab_order[self.labeled_batch:]
        return [self.labeled[i] for i in idx]

    def _next_unlabeled(self) -> list:
        if not self.unlabeled:
            return []
        size = min(self.unlabeled_batch, len(self.unlabeled))
        idx: list[int] = []
        while len(idx) < size:
            if not self._unl_order:
                self._unl_order = self._unl_rng.permutation(len(self.unlabeled)).tolist()
            take = size - len(idx)
            idx += self._unl_order[:take]
            self._unl_order = self._unl_order[take:]
        return [self.unlabeled[i] for i in idx]

    def __iter__(self) -> Iterator[tuple[list, list]]:
        while True:
            yield self._next_labeled(), self._next_unlabeled()

    def state_dict(self) -> dict:
        return {
            "lab_rng": self._lab_rng.bit_generator.state,
            "unl_rng": self._unl_rng.bit_generator.state,
            "lab_order": list(self._lab_order),
            "unl_order": list(self._unl_order),
        }

    def load_state_dict(self, state: dict) -> None:
        self._lab_rng.bit_generator.state = state["lab_rng"]
        self._unl_rng.bit_generator.state = state["unl_rng"]
        self._lab_order = list(state["lab_order"])
        self._unl_order = list(state["unl_order"])


def sample_batches(labeled, unlabeled, labeled_batch: int = 16, unlabeled_batch: int = 96, seed: int = 0) -> BatchStream:
    if not labeled:
        raise CorpusError("labeled pool is empty")
    return BatchStream(labeled, unlabeled, labeled_batch, unlabeled_batch, seed)
