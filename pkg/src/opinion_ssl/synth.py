"""Template-generated restaurant-review corpora for desk-scale experiments.

Labeled sentences use the "seen" templates and word lists.  The test set uses
shifted templates and half of its nouns/adjectives come from word lists that
never appear in labeled data; the raw corpus mixes both, so only a model that
learns from raw text sees the shifted vocabulary in context.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import TOWEInstance, dump_labeled, encode_bio
from .perturb import SynonymLexicon

NOUNS_SEEN = ["pizza", "pasta", "waiter", "service", "staff", "menu", "dessert", "salad", "wine", "decor",
              "ambience", "price", "coffee", "music", "burger", "sushi", "steak", "bread", "soup", "table"]
NOUNS_NEW = ["risotto", "bartender", "patio", "espresso", "noodles", "tacos", "cocktails", "hostess", "lasagna",
             "brunch", "seating", "portions", "dumplings", "curry", "lobster", "chef", "booth", "pancakes",
             "salmon", "fries"]
POS_SEEN = ["good", "great", "delicious", "friendly", "excellent", "tasty", "fresh", "amazing", "nice", "wonderful"]
NEG_SEEN = ["bad", "rude", "slow", "cold", "bland", "terrible", "awful", "dirty", "noisy", "overpriced"]
POS_NEW = ["scrumptious", "superb", "delightful", "courteous", "splendid", "flavorful", "marvelous", "lovely",
           "stellar", "divine"]
NEG_NEW = ["stale", "soggy", "greasy", "sloppy", "dreadful", "lousy", "gloomy", "mediocre", "horrible", "pricey"]
ADVERBS = ["very", "really", "quite", "so", "extremely", "pretty"]

# A template is a list of pieces: literal strings, ("N", k) noun slot k, ("A", k) opinion slot for noun k.
SEEN_TEMPLATES = [
    ["the", ("N", 0), "was", ("A", 0), "."],
    [("A", 0), ("N", 0), "."],
    ["the", ("N", 0), "was", ("A", 0), "but", "the", ("N", 1), "was", ("A", 1), "."],
    ["we", "had", ("A", 0), ("N", 0), "and", ("A", 1), ("N", 1), "."],
    ["the", ("N", 0), "is", "not", ("A", 0), "."],
    ["our", ("N", 0), "came", ("A", 0), "and", "the", ("N", 1), "was", ("A", 1), "."],
    ["i", "think", "the", ("N", 0), "is", ("A", 0), "."],
]
SHIFTED_TEMPLATES = [
    [("N", 0), ":", ("A", 0), "!"],
    ["honestly", ",", "the", ("N", 0), "felt", ("A", 0), "."],
    ["what", "a", ("A", 0), ("N", 0), ",", "but", "the", ("N", 1), "seemed", ("A", 1), "."],
    ["they", "served", ("A", 0), ("N", 0), "with", ("A", 1), ("N", 1), "."],
    ["i", "found", "the", ("N", 0), "rather", ("A", 0), "."],
    [("A", 0), ("N", 0), ",", ("A", 1), ("N", 1), "."],
    ["the", ("N", 0), "here", "always", "tastes", ("A", 0), "."],
]


@dataclass
class SynthSentence:
    tokens: list[str]
    targets: list[tuple[int, int]]
    opinions: list[list[tuple[int, int]]]
    polarities: list[int]

    def instances(self) -> list[TOWEInstance]:
        return [TOWEInstance(self.tokens, t, encode_bio(len(self.tokens), ops))
                for t, ops in zip(self.targets, self.opinions)]


def _render(template, rng: np.random.Generator, new_share: float) -> SynthSentence:
    n_slots = 1 + max(p[1] for p in template if isinstance(p, tuple))
    nouns, opinions, pols = [], [], []
    for _ in range(n_slots):
        novel = rng.random() < new_share
        pool = NOUNS_NEW if novel else NOUNS_SEEN
        noun = pool[rng.integers(len(pool))]
        while noun in nouns:
            noun = pool[rng.integers(len(pool))]
        nouns.append(noun)
        pol = int(rng.integers(2))
        novel = rng.random() < new_share
        pool = (POS_NEW if novel else POS_SEEN) if pol else (NEG_NEW if novel else NEG_SEEN)
        words = [pool[rng.integers(len(pool))]]
        if rng.random() < 0.25:
            words.insert(0, ADVERBS[rng.integers(len(ADVERBS))])
        opinions.append(words)
        pols.append(pol)
    tokens: list[str] = []
    targets: dict[int, tuple[int, int]] = {}
    spans: dict[int, list[tuple[int, int]]] = {k: [] for k in range(n_slots)}
    for piece in template:
        if isinstance(piece, str):
            tokens.append(piece)
            continue
        kind, k = piece
        start = len(tokens)
        if kind == "N":
            tokens.append(nouns[k])
            targets[k] = (start, start + 1)
        else:
            words = opinions[k]
            # negation belongs to the opinion span
            if tokens and tokens[-1] == "not":
                start -= 1
            tokens.extend(words)
            spans[k].append((start, len(tokens)))
    order = range(n_slots)
    return SynthSentence(tokens, [targets[k] for k in order], [spans[k] for k in order], [pols[k] for k in order])


def generate(templates, count: int, rng: np.random.Generator, new_share: float) -> list[SynthSentence]:
    return [_render(templates[rng.integers(len(templates))], rng, new_share) for _ in range(count)]


def synonym_lexicon() -> SynonymLexicon:
    lex = SynonymLexicon()
    for seen, new in ((POS_SEEN, POS_NEW), (NEG_SEEN, NEG_NEW)):
        for i, (a, b) in enumerate(zip(seen, new)):
            lex.add(a, [b, seen[(i + 1) % len(seen)]])
            lex.add(b, [a, new[(i + 1) % len(new)]])
    return lex


@dataclass
class SynthCorpus:
    labeled: list[SynthSentence]
    test: list[SynthSentence]
    raw: list[SynthSentence]
    sentiment: list[SynthSentence]


def make_corpus(size: int = 500, seed: int = 7, raw_size: int | None = None, test_size: int | None = None) -> SynthCorpus:
    if size < 50:
        raise ValueError("size must be at least 50")
    raw_size = 10 * size if raw_size is None else raw_size
    test_size = size // 2 if test_size is None else test_size
    rng_lab, rng_test, rng_raw, rng_sent = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))
    labeled = generate(SEEN_TEMPLATES, size, rng_lab, new_share=0.0)
    test = generate(SHIFTED_TEMPLATES, test_size, rng_test, new_share=0.5)
    raw = []
    for _ in range(raw_size):
        family = SHIFTED_TEMPLATES if rng_raw.random() < 0.5 else SEEN_TEMPLATES
        raw.append(_render(family[rng_raw.integers(len(family))], rng_raw, 0.5))
    sentiment = []
    while len(sentiment) < raw_size:
        family = SHIFTED_TEMPLATES if rng_sent.random() < 0.5 else SEEN_TEMPLATES
        s = _render(family[rng_sent.integers(len(family))], rng_sent, 0.5)
        if len(set(s.polarities)) == 1:
            sentiment.append(s)
    return SynthCorpus(labeled, test, raw, sentiment)


def write_corpus(corpus: SynthCorpus, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "labeled": out / "labeled.jsonl",
        "test": out / "test.jsonl",
        "raw": out / "raw.txt",
        "sentiment": out / "sentiment.jsonl",
        "lexicon": out / "lexicon.jsonl",
    }
    dump_labeled([i for s in corpus.labeled for i in s.instances()], paths["labeled"])
    dump_labeled([i for s in corpus.test for i in s.instances()], paths["test"])
    paths["raw"].write_text("".join(" ".join(s.tokens) + "\n" for s in corpus.raw), encoding="utf-8")
    with open(paths["sentiment"], "w", encoding="utf-8") as f:
        for s in corpus.sentiment:
            f.write(json.dumps({"tokens": s.tokens, "polarity": s.polarities[0]}) + "\n")
    synonym_lexicon().dump(paths["lexicon"])
    return paths
