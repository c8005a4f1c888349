"""Target-conditioned opinion word tagger and its supervised loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import TAG2ID, TAGS, Span, decode_bio
from .encoder import EncoderHandle


@dataclass
class ToweConfig:
    pos_dim: int = 8
    refiner_layers: int = 2
    refiner_heads: int = 4
    refiner_ff: int = 128
    dropout: float = 0.1

    @classmethod
    def full_scale(cls) -> ToweConfig:
        return cls(pos_dim=64, refiner_ff=512)


@dataclass
class PredictionSequence:
    distributions: torch.Tensor  # (n, 3) over B, I, O
    argmax_labels: list[str]
    confidences: list[float]


def target_indicator(n: int, span: Span) -> list[int]:
    s, e = span
    return [1 if s <= i < e else 0 for i in range(n)]


class ToweModel(nn.Module):
    def __init__(self, encoder: EncoderHandle, cfg: ToweConfig | None = None):
        super().__init__()
        cfg = cfg or ToweConfig()
        self.cfg = cfg
        self.encoder = encoder
        self.position = nn.Embedding(2, cfg.pos_dim)
        d = encoder.hidden_dim + cfg.pos_dim
        layer = nn.TransformerEncoderLayer(d, cfg.refiner_heads, cfg.refiner_ff, cfg.dropout, batch_first=True)
        self.refiner = nn.TransformerEncoder(layer, cfg.refiner_layers, enable_nested_tensor=False)
        self.head = nn.Linear(d, len(TAGS))

    def encoder_parameters(self):
        return list(self.encoder.parameters())

    def other_parameters(self):
        enc = {id(p) for p in self.encoder.parameters()}
        return [p for p in self.parameters() if id(p) not in enc]

    def target_embeddings(self, batch_tokens, spans, width: int) -> torch.Tensor:
        ind = torch.zeros(len(batch_tokens), width, dtype=torch.long)
        for b, (toks, span) in enumerate(zip(batch_tokens, spans)):
            if not 0 <= span[0] < span[1] <= len(toks):
                raise ValueError(f"target span {list(span)} invalid for {len(toks)} tokens")
            ind[b, span[0]: span[1]] = 1
        return self.position(ind.to(self.encoder.device))

    def logits(self, batch_tokens: Sequence[Sequence[str]], spans: Sequence[Span]):
        """Returns ``(logits, mask)`` with logits of shape (B, L, 3)."""
        h, mask = self.encoder(batch_tokens)
        e = self.target_embeddings(batch_tokens, spans, h.shape[1])
        r = self.refiner(torch.cat([h, e.to(h.dtype)], dim=-1), src_key_padding_mask=~mask)
        return self.head(r), mask

    def log_probs(self, batch_tokens, spans):
        logits, mask = self.logits(batch_tokens, spans)
        return F.log_softmax(logits, dim=-1), mask

    @torch.no_grad()
    def forward_one(self, tokens: Sequence[str], span: Span) -> PredictionSequence:
        probs = self.log_probs([tokens], [span])[0][0, : len(tokens)].exp()
        return to_prediction(probs)


def to_prediction(probs: torch.Tensor) -> PredictionSequence:
    conf, idx = probs.max(dim=-1)  # first maximum wins: B < I < O
    return PredictionSequence(probs, [TAGS[i] for i in idx.tolist()], conf.tolist())


def forward(model: ToweModel, tokens: Sequence[str], target_span: Span) -> PredictionSequence:
    return model.forward_one(tokens, target_span)


def supervised_loss(model: ToweModel, batch) -> torch.Tensor:
    """Mean over instances of the per-token-averaged cross-entropy."""
    logp, mask = model.log_probs([x.tokens for x in batch], [x.target_span for x in batch])
    gold = torch.full(mask.shape, TAG2ID["O"], dtype=torch.long, device=logp.device)
    for b, x in enumerate(batch):
        gold[b, : len(x.labels)] = torch.tensor([TAG2ID[t] for t in x.labels])
    nll = -logp.gather(-1, gold.unsqueeze(-1)).squeeze(-1) * mask
    return (nll.sum(1) / mask.sum(1)).mean()


@torch.no_grad()
def predict_batch(model: ToweModel, batch_tokens, spans, batch_size: int = 256) -> list[PredictionSequence]:
    out = []
    for i in range(0, len(batch_tokens), batch_size):
        toks, sp = batch_tokens[i: i + batch_size], spans[i: i + batch_size]
        logp, _ = model.log_probs(toks, sp)
        out.extend(to_prediction(logp[b, : len(t)].exp()) for b, t in enumerate(toks))
    return out


def predict_spans(model: ToweModel, tokens, target_span) -> list[Span]:
    return decode_bio(forward(model, tokens, target_span).argmax_labels)
