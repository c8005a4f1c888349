"""Opinion-target tagger used to attach pseudo targets to raw sentences."""

from __future__ import annotations

import copy
import hashlib
import io
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import TAG2ID, TAGS, TOWEInstance, UnlabeledInstance, decode_bio, encode_bio, group_by_sentence
from .encoder import EncoderHandle
from .evaluation import span_prf

logger = logging.getLogger(__name__)


@dataclass
class TaggerTrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr_encoder: float = 2e-5
    lr_other: float = 2e-4
    seed: int = 0


class TargetTagger(nn.Module):
    def __init__(self, encoder: EncoderHandle):
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(encoder.hidden_dim, len(TAGS))

    def forward(self, batch_tokens):
        h, mask = self.encoder(batch_tokens)
        return F.log_softmax(self.head(h), dim=-1), mask

    @torch.no_grad()
    def predict_labels(self, batch_tokens, batch_size: int = 256) -> list[list[str]]:
        out = []
        for i in range(0, len(batch_tokens), batch_size):
            chunk = batch_tokens[i: i + batch_size]
            logp, _ = self(chunk)
            idx = logp.argmax(-1).tolist()
            out.extend([TAGS[j] for j in idx[b][: len(t)]] for b, t in enumerate(chunk))
        return out

    def fingerprint(self) -> str:
        buf = io.BytesIO()
        torch.save(self.state_dict(), buf)
        return hashlib.sha256(buf.getvalue()).hexdigest()[:16]


def target_examples(instances: Sequence[TOWEInstance]) -> list[tuple[tuple[str, ...], list[str]]]:
    """One (tokens, target BIO labels) example per sentence, all its targets marked."""
    out = []
    for group in group_by_sentence(instances):
        spans = []
        for inst in group:
            s, e = inst.target_span
            if all(e <= s2 or e2 <= s for s2, e2 in spans):
                spans.append((s, e))
        out.append((group[0].tokens, encode_bio(len(group[0].tokens), spans)))
    return out


def _tagger_f1(tagger: TargetTagger, examples) -> float:
    was_training = tagger.training
    tagger.eval()
    pred = tagger.predict_labels([t for t, _ in examples])
    tagger.train(was_training)
    return span_prf([(decode_bio(gold), decode_bio(p)) for (_, gold), p in zip(examples, pred)])[2]


def train_target_tagger(train: Sequence[TOWEInstance], valid: Sequence[TOWEInstance], encoder: EncoderHandle,
                        cfg: TaggerTrainConfig | None = None) -> TargetTagger:
    """Cross-entropy training over B/I/O target tags; keeps the best-valid-F1 weights."""
    cfg = cfg or TaggerTrainConfig()
    if not train:
        raise ValueError("empty training set")
    torch.manual_seed(cfg.seed)
    tagger = TargetTagger(encoder)
    train_ex, valid_ex = target_examples(train), target_examples(valid or train)
    opt = torch.optim.AdamW([
        {"params": list(encoder.parameters()), "lr": cfg.lr_encoder},
        {"params": list(tagger.head.parameters()), "lr": cfg.lr_other},
    ])
    rng = np.random.default_rng(cfg.seed)
    best_f1, best_state = -1.0, None
    for epoch in range(cfg.epochs):
        tagger.train()
        order = rng.permutation(len(train_ex)).tolist()
        for i in range(0, len(order), cfg.batch_size):
            chunk = [train_ex[j] for j in order[i: i + cfg.batch_size]]
            logp, mask = tagger([t for t, _ in chunk])
            gold = torch.full(mask.shape, TAG2ID["O"], dtype=torch.long)
            for b, (_, labels) in enumerate(chunk):
                gold[b, : len(labels)] = torch.tensor([TAG2ID[x] for x in labels])
            nll = -logp.gather(-1, gold.unsqueeze(-1).to(logp.device)).squeeze(-1) * mask
            loss = (nll.sum(1) / mask.sum(1)).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
        f1 = _tagger_f1(tagger, valid_ex)
        logger.info("target tagger epoch %d valid F1 %.4f", epoch, f1)
        if f1 > best_f1:
            best_f1, best_state = f1, copy.deepcopy(tagger.state_dict())
    tagger.load_state_dict(best_state)
    tagger.eval()
    tagger.best_f1 = best_f1
    return tagger


def pseudo_label_targets(tagger: TargetTagger, raw: Sequence[Sequence[str]],
                         source_ids: Sequence[str] | None = None) -> tuple[list[UnlabeledInstance], int]:
    """Expand every predicted target span into an instance; returns (instances, dropped sentence count)."""
    tagger.eval()
    labels = tagger.predict_labels([list(t) for t in raw])
    out, dropped = [], 0
    for i, (toks, lab) in enumerate(zip(raw, labels)):
        spans = decode_bio(lab)
        if not spans:
            dropped += 1
            continue
        sid = source_ids[i] if source_ids is not None else str(i)
        out.extend(UnlabeledInstance(tuple(toks), span, sid) for span in spans)
    return out, dropped
