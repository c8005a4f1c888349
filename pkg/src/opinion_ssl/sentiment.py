"""Attention-pooled sentiment classifier used to weight token confidences."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encoder import EncoderHandle

logger = logging.getLogger(__name__)


@dataclass
class SentimentTrainConfig:
    steps: int = 3000
    batch_size: int = 128
    lr_encoder: float = 1e-5
    lr_other: float = 1e-4
    seed: int = 0


def polarity_from_rating(stars: float) -> int | None:
    """>= 4 stars positive, <= 2 negative, 3 stars dropped."""
    if stars >= 4:
        return 1
    if stars <= 2:
        return 0
    return None


def load_sentiment_corpus(path) -> list[tuple[list[str], int]]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if "polarity" in rec:
                pol = rec["polarity"]
            elif "rating" in rec:
                pol = polarity_from_rating(rec["rating"])
                if pol is None:
                    continue
            else:
                raise ValueError(f"{path}:{line_no}: record needs 'polarity' or 'rating'")
            if pol not in (0, 1):
                raise ValueError(f"{path}:{line_no}: polarity must be 0 or 1, got {pol!r}")
            out.append((list(rec["tokens"]), int(pol)))
    return out


class SentimentClassifier(nn.Module):
    def __init__(self, encoder: EncoderHandle):
        super().__init__()
        d = encoder.hidden_dim
        self.encoder = encoder
        self.W = nn.Parameter(torch.empty(d, d))
        nn.init.xavier_uniform_(self.W)
        self.b = nn.Parameter(torch.zeros(()))
        self.polarity = nn.Linear(d, 2)

    def attention_logits(self, z: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """f(z_i, z_avg) = z_i W z_avg + b, -inf on padding."""
        m = mask.unsqueeze(-1).to(z.dtype)
        z_avg = (z * m).sum(1) / m.sum(1)
        f = torch.einsum("bld,de,be->bl", z, self.W, z_avg) + self.b
        return f.masked_fill(~mask, float("-inf"))

    def attend(self, batch_tokens):
        z, mask = self.encoder(batch_tokens)
        alpha = torch.softmax(self.attention_logits(z, mask), dim=-1)
        return z, alpha, mask

    def forward(self, batch_tokens) -> torch.Tensor:
        z, alpha, _ = self.attend(batch_tokens)
        return self.polarity(torch.einsum("bl,bld->bd", alpha, z))

    def freeze(self) -> SentimentClassifier:
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        return self


@torch.no_grad()
def attention_scores(clf: SentimentClassifier, tokens: Sequence[str]) -> list[float]:
    _, alpha, _ = clf.attend([tokens])
    return alpha[0, : len(tokens)].tolist()


@torch.no_grad()
def attention_batch(clf: SentimentClassifier, batch_tokens, batch_size: int = 256) -> list[list[float]]:
    was_training = clf.training
    clf.eval()
    out = []
    for i in range(0, len(batch_tokens), batch_size):
        chunk = batch_tokens[i: i + batch_size]
        _, alpha, _ = clf.attend(chunk)
        out.extend(alpha[b, : len(t)].tolist() for b, t in enumerate(chunk))
    clf.train(was_training)
    return out


def sc_senti(alpha: Sequence[float], confidences: Sequence[float]) -> float:
    if len(alpha) != len(confidences):
        raise ValueError(f"{len(alpha)} attention weights for {len(confidences)} confidences")
    return float(sum(a * c for a, c in zip(alpha, confidences)))


def pretrain_sentiment(corpus, encoder: EncoderHandle, cfg: SentimentTrainConfig | None = None) -> SentimentClassifier:
    """Train on (tokens, polarity) pairs for a fixed step budget; returns a frozen model."""
    cfg = cfg or SentimentTrainConfig()
    labels = {pol for _, pol in corpus}
    if labels != {0, 1}:
        raise ValueError(f"sentiment corpus needs both polarity classes, found {sorted(labels)}")
    torch.manual_seed(cfg.seed)
    clf = SentimentClassifier(encoder)
    enc_ids = {id(p) for p in encoder.parameters()}
    opt = torch.optim.AdamW([
        {"params": list(encoder.parameters()), "lr": cfg.lr_encoder},
        {"params": [p for p in clf.parameters() if id(p) not in enc_ids], "lr": cfg.lr_other},
    ])
    rng = np.random.default_rng(cfg.seed)
    order: list[int] = []
    clf.train()
    for step in range(cfg.steps):
        if len(order) < cfg.batch_size:
            order += rng.permutation(len(corpus)).tolist()
        idx, order = order[: cfg.batch_size], order[cfg.batch_size:]
        toks = [corpus[i][0] for i in idx]
        y = torch.tensor([corpus[i][1] for i in idx], device=encoder.device)
        loss = F.cross_entropy(clf(toks), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 500 == 0:
            logger.info("sentiment step %d loss %.4f", step, loss.item())
    return clf.freeze()


@torch.no_grad()
def sentiment_accuracy(clf: SentimentClassifier, corpus, batch_size: int = 256) -> float:
    clf.eval()
    correct = 0
    for i in range(0, len(corpus), batch_size):
        chunk = corpus[i: i + batch_size]
        pred = clf([t for t, _ in chunk]).argmax(-1).tolist()
        correct += sum(int(p == y) for p, (_, y) in zip(pred, chunk))
    return correct / len(corpus)
