"""Confidence gates and the filtered consistency loss on unlabeled sentences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import torch

from .corpus import UnlabeledInstance
from .perturb import PerturbConfig, SynonymLexicon, perturb
from .sentiment import SentimentClassifier, attention_batch, sc_senti
from .towe import PredictionSequence, ToweModel

SENTENCE_MODES = ("senti", "avg", "off")
SC_BINS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class FilterConfig:
    T: float = 0.9
    tau: float = 0.7
    sentence_mode: str = "senti"
    word_mode: str = "on"
    consistency: str = "on"
    normalize: str = "all"  # divide by all n tokens; "kept" divides by the kept count

    def __post_init__(self):
        if self.sentence_mode not in SENTENCE_MODES:
            raise ValueError(f"sentence_mode must be one of {SENTENCE_MODES}")
        if self.word_mode not in ("on", "off") or self.consistency not in ("on", "off"):
            raise ValueError("word_mode and consistency must be 'on' or 'off'")
        if self.normalize not in ("all", "kept"):
            raise ValueError("normalize must be 'all' or 'kept'")
        if not (0.0 <= self.T <= 1.0 and 0.0 <= self.tau <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")

    @classmethod
    def ablation(cls, name: str, T: float = 0.9, tau: float = 0.7) -> FilterConfig:
        """Named rows: full, no_sentiment, no_sentence_filter, no_word_filter, supervised_only."""
        rows = {
            "full": {},
            "no_sentiment": {"sentence_mode": "avg"},
            "no_sentence_filter": {"sentence_mode": "off"},
            "no_word_filter": {"word_mode": "off"},
            "supervised_only": {"consistency": "off"},
        }
        return cls(T=T, tau=tau, **rows[name])


@dataclass
class ConfidenceReport:
    token_confidences: list[float]
    sc_avg: float
    sc_senti: float | None
    sentence_pass: bool
    token_pass: list[bool] = field(default_factory=list)


def sentence_confidence(pred: PredictionSequence, alpha: Sequence[float] | None, mode: str) -> tuple[float, float | None]:
    conf = pred.confidences
    if (alpha is not None) != (mode == "senti"):
        raise ValueError("attention weights are required for, and only for, mode 'senti'")
    sc_avg = sum(conf) / len(conf)
    return sc_avg, (sc_senti(alpha, conf) if alpha is not None else None)


def confidence_report(pred: PredictionSequence, alpha, cfg: FilterConfig) -> ConfidenceReport:
    sc_avg, senti = sentence_confidence(pred, alpha if cfg.sentence_mode == "senti" else None, cfg.sentence_mode)
    if cfg.sentence_mode == "off":
        passed = True
    else:
        passed = (senti if cfg.sentence_mode == "senti" else sc_avg) > cfg.T
    tokens = [cfg.word_mode == "off" or c > cfg.tau for c in pred.confidences]
    return ConfidenceReport(list(pred.confidences), sc_avg, senti, passed, tokens)


class Perturber:
    def __init__(self, cfg: PerturbConfig | None = None, lexicon: SynonymLexicon | None = None):
        self.cfg = cfg or PerturbConfig()
        self.lexicon = lexicon if lexicon is not None else SynonymLexicon()

    def __call__(self, inst: UnlabeledInstance, step_seed: int) -> UnlabeledInstance:
        return perturb(inst, self.cfg, self.lexicon, step_seed)


def identity_perturber(inst, step_seed):
    return inst


def _padded(rows: Sequence[Sequence[float]], width: int, dtype) -> torch.Tensor:
    out = torch.zeros(len(rows), width, dtype=dtype)
    for b, r in enumerate(rows):
        out[b, : len(r)] = torch.tensor(r, dtype=dtype)
    return out


@dataclass
class ConsistencyStats:
    sentences: int = 0
    sentences_kept: int = 0
    tokens_kept: int = 0
    sentence_scores: list = field(default_factory=list)


def consistency_loss(
    model: ToweModel,
    batch: Sequence[UnlabeledInstance],
    perturber: Callable,
    sentiment: SentimentClassifier | None,
    cfg: FilterConfig,
    step: int = 0,
    alphas: Sequence[Sequence[float]] | None = None,
) -> tuple[torch.Tensor, ConsistencyStats]:
    """Filtered token-wise cross-entropy between pseudo labels and the perturbed view.

    Pseudo labels, confidences and both gates come from a gradient-free pass on
    the unperturbed sentences.  Sentences failing the sentence gate (or with no
    token passing the word gate) contribute exactly zero and are not re-run.
    """
    dev = next(model.parameters()).device
    zero = torch.zeros((), dtype=next(model.parameters()).dtype, device=dev)
    stats = ConsistencyStats(sentences=len(batch))
    if cfg.consistency == "off" or not batch:
        return zero, stats
    tokens = [x.tokens for x in batch]
    spans = [x.target_span for x in batch]
    with torch.no_grad():
        clean_logp, mask = model.log_probs(tokens, spans)
    conf, pseudo = clean_logp.exp().max(dim=-1)
    conf = conf.double() * mask
    lengths = mask.sum(1)
    sc_avg = conf.sum(1) / lengths
    if cfg.sentence_mode == "senti":
        if alphas is None:
            if sentiment is None:
                raise ValueError("sentence_mode 'senti' needs a sentiment classifier or precomputed alphas")
            alphas = attention_batch(sentiment, tokens)
        score = (_padded(alphas, mask.shape[1], torch.float64).to(dev) * conf).sum(1)
    else:
        score = sc_avg
    sent_pass = score > cfg.T if cfg.sentence_mode != "off" else torch.ones_like(score, dtype=torch.bool)
    tok_pass = (conf > cfg.tau) & mask if cfg.word_mode == "on" else mask.clone()
    tok_pass &= sent_pass.unsqueeze(1)
    stats.sentence_scores = score.tolist()
    stats.sentences_kept = int(sent_pass.sum())
    stats.tokens_kept = int(tok_pass.sum())
    active = [b for b in range(len(batch)) if tok_pass[b].any()]
    if not active:
        return zero, stats
    views = [perturber(batch[b], step * 1_000_003 + b) for b in active]
    pert_logp, _ = model.log_probs([v.tokens for v in views], [v.target_span for v in views])
    width = pert_logp.shape[1]
    idx = torch.tensor(active, device=dev)
    target = pseudo[idx, :width]
    keep = tok_pass[idx, :width]
    ce = -pert_logp.gather(-1, target.unsqueeze(-1)).squeeze(-1)
    ce = torch.where(keep, ce, torch.zeros_like(ce))
    denom = lengths[idx] if cfg.normalize == "all" else keep.sum(1)
    return (ce.sum(1) / denom).sum() / len(batch), stats
