"""Random mask / random synonym replacement for unlabeled sentences."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .corpus import UnlabeledInstance

MASK = "[MASK]"


@dataclass(frozen=True)
class PerturbConfig:
    mask_rate: float = 0.15
    synonym_rate: float = 0.15
    mask_symbol: str = MASK
    seed: int = 0

    def __post_init__(self):
        for name in ("mask_rate", "synonym_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


class SynonymLexicon(dict):
    """Lowercase word -> list of single-token synonyms."""

    def __init__(self, entries=None):
        super().__init__()
        for word, syns in (entries or {}).items():
            self.add(word, syns)

    def add(self, word: str, synonyms) -> None:
        word = word.lower()
        syns = [s for s in synonyms if s != word]
        if not syns:
            raise ValueError(f"{word!r} has no synonym other than itself")
        for s in syns:
            if not s or len(s.split()) != 1:
                raise ValueError(f"synonym {s!r} of {word!r} is not a single token")
        self[word] = syns

    @classmethod
    def load(cls, path) -> SynonymLexicon:
        lex = cls()
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                try:
                    lex.add(rec["word"], rec["synonyms"])
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{path}:{line_no}: {exc}") from exc
        return lex

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for word in sorted(self):
                f.write(json.dumps({"word": word, "synonyms": self[word]}) + "\n")


def perturb(instance: UnlabeledInstance, cfg: PerturbConfig, lexicon: SynonymLexicon, step_seed: int) -> UnlabeledInstance:
    """Return a same-length view of ``instance`` with the target left intact.

    One strategy (mask or synonym) is picked per call; each non-target token
    is then altered independently with that strategy's rate.
    """
    rng = np.random.default_rng([cfg.seed, step_seed])
    use_mask = rng.random() < 0.5
    rolls = rng.random(len(instance.tokens))
    picks = rng.random(len(instance.tokens))
    s, e = instance.target_span
    tokens = list(instance.tokens)
    for i, tok in enumerate(tokens):
        if s <= i < e:
            continue
        if use_mask:
            if rolls[i] < cfg.mask_rate:
                tokens[i] = cfg.mask_symbol
        elif rolls[i] < cfg.synonym_rate:
            syns = lexicon.get(tok.lower())
            if syns:
                tokens[i] = syns[int(picks[i] * len(syns))]
    return replace(instance, tokens=tuple(tokens))
