"""Contextual encoders behind one interface.

``small`` is a 2-layer self-attention encoder with learned token embeddings,
trainable from scratch on CPU.  ``pretrained`` wraps a HuggingFace model and
pools subword vectors back to one vector per word (first subtoken).
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)

PAD, UNK, MASK = "[PAD]", "[UNK]", "[MASK]"
SPECIALS = (PAD, UNK, MASK)


class SequenceTooLong(ValueError):
    pass


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
        counts: dict[str, int] = {}
        for sent in sentences:
            for tok in sent:
                counts[tok] = counts.get(tok, 0) + 1
        # sorted so the vocabulary does not depend on corpus order
        return cls(sorted(t for t, c in counts.items() if c >= min_count and t not in SPECIALS))

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi

    def ids(self, tokens: Sequence[str]) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(t, unk) for t in tokens]

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()[:16]


def cooccurrence_embeddings(sentences: Iterable[Sequence[str]], vocab: Vocabulary, dim: int,
                            window: int = 2, scale: float = 1.0):
    """Token vectors from a truncated SVD of the positive PMI co-occurrence matrix.

    Rows are scaled to unit RMS times ``scale``; special tokens get zero rows
    except [MASK] and [UNK], which get the mean vector.
    """
    V = len(vocab)
    counts = np.zeros((V, V))
    for sent in sentences:
        ids = vocab.ids(sent)
        for i, a in enumerate(ids):
            for j in range(max(0, i - window), min(len(ids), i + window + 1)):
                if j != i:
                    counts[a, ids[j]] += 1.0
    total = counts.sum()
    if total == 0:
        return np.zeros((V, dim))
    row = counts.sum(1, keepdims=True)
    col = counts.sum(0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(counts * total / (row * col))
    ppmi = np.where(np.isfinite(pmi) & (pmi > 0), pmi, 0.0)
    u, s, _ = np.linalg.svd(ppmi)
    k = min(dim, V)
    emb = np.zeros((V, dim))
    emb[:, :k] = u[:, :k] * np.sqrt(s[:k])
    # fix the SVD sign ambiguity so results do not depend on the LAPACK build
    signs = np.sign(emb[np.abs(emb).argmax(0), np.arange(dim)])
    emb *= np.where(signs == 0, 1.0, signs)
    rms = np.sqrt((emb[len(SPECIALS):] ** 2).mean()) or 1.0
    emb *= scale / rms
    emb[0] = 0.0
    emb[vocab.stoi[UNK]] = emb[vocab.stoi[MASK]] = emb[len(SPECIALS):].mean(0)
    return emb


@dataclass
class EncoderConfig:
    variant: str = "small"  # small | pretrained
    hidden_dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_dim: int = 128
    dropout: float = 0.1
    max_len: int = 64
    pretrained_path: str = ""

    @classmethod
    def full_scale(cls, pretrained_path: str = "") -> EncoderConfig:
        return cls(variant="pretrained", hidden_dim=512, max_len=128, pretrained_path=pretrained_path)


class SmallEncoder(nn.Module):
    def __init__(self, vocab_size: int, cfg: EncoderConfig):
        super().__init__()
        self.tok = nn.Embedding(vocab_size, cfg.hidden_dim, padding_idx=0)
        self.pos = nn.Embedding(cfg.max_len, cfg.hidden_dim)
        layer = nn.TransformerEncoderLayer(
            cfg.hidden_dim, cfg.heads, cfg.ff_dim, cfg.dropout, batch_first=True
        )
        self.layers = nn.TransformerEncoder(layer, cfg.layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(cfg.hidden_dim)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.drop(self.norm(self.tok(ids) + self.pos(positions)))
        return self.layers(x, src_key_padding_mask=~mask)


class EncoderHandle(nn.Module):
    """Maps batches of token lists to padded (B, L, hidden_dim) tensors."""

    def __init__(self, vocab: Vocabulary, cfg: EncoderConfig):
        super().__init__()
        self.vocab = vocab
        self.cfg = cfg
        self.hidden_dim = cfg.hidden_dim
        self.max_len = cfg.max_len
        if cfg.variant == "small":
            self.net = SmallEncoder(len(vocab), cfg)
        elif cfg.variant == "pretrained":
            self._init_pretrained(cfg)
        else:
            raise ValueError(f"unknown encoder variant {cfg.variant!r}")

    def _init_pretrained(self, cfg: EncoderConfig) -> None:
        from transformers import AutoModel, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(cfg.pretrained_path)
        self.tokenizer.add_special_tokens({"additional_special_tokens": [MASK]})
        self.net = AutoModel.from_pretrained(cfg.pretrained_path)
        self.net.resize_token_embeddings(len(self.tokenizer))
        if self.net.config.hidden_size != cfg.hidden_dim:
            logger.warning("encoder hidden size %d overrides configured %d", self.net.config.hidden_size, cfg.hidden_dim)
            self.hidden_dim = cfg.hidden_dim = self.net.config.hidden_size

    @property
    def variant(self) -> str:
        return self.cfg.variant

    @property
    def trainable(self) -> bool:
        return any(p.requires_grad for p in self.parameters())

    @property
    def device(self) -> torch.device:
        return next(self.parameters()).device

    def _check_lengths(self, batch: Sequence[Sequence[str]]) -> None:
        for toks in batch:
            if not toks:
                raise ValueError("cannot encode an empty token list")
            if len(toks) > self.max_len:
                raise SequenceTooLong(f"{len(toks)} tokens exceed the encoder limit of {self.max_len}")

    def forward(self, batch: Sequence[Sequence[str]]) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns ``(vectors, mask)``; ``mask[b, i]`` is True on real tokens."""
        self._check_lengths(batch)
        if self.cfg.variant == "small":
            return self._forward_small(batch)
        return self._forward_pretrained(batch)

    def _forward_small(self, batch):
        width = max(len(t) for t in batch)
        ids = torch.zeros(len(batch), width, dtype=torch.long)
        mask = torch.zeros(len(batch), width, dtype=torch.bool)
        for b, toks in enumerate(batch):
            ids[b, : len(toks)] = torch.tensor(self.vocab.ids(toks))
            mask[b, : len(toks)] = True
        dev = self.device
        ids, mask = ids.to(dev), mask.to(dev)
        return self.net(ids, mask), mask

    def _forward_pretrained(self, batch):
        enc = self.tokenizer(
            [list(t) for t in batch], is_split_into_words=True, padding=True,
            truncation=False, return_tensors="pt",
        )
        if enc["input_ids"].shape[1] > self.tokenizer.model_max_length:
            raise SequenceTooLong(f"subword length exceeds {self.tokenizer.model_max_length}")
        dev = self.device
        out = self.net(**{k: v.to(dev) for k, v in enc.items()}).last_hidden_state
        width = max(len(t) for t in batch)
        index = torch.zeros(len(batch), width, dtype=torch.long)
        mask = torch.zeros(len(batch), width, dtype=torch.bool)
        for b, toks in enumerate(batch):
            seen = set()
            for pos, wid in enumerate(enc.word_ids(b)):
                if wid is not None and wid not in seen:
                    seen.add(wid)
                    index[b, wid] = pos
            mask[b, : len(toks)] = True
        index, mask = index.to(dev), mask.to(dev)
        vecs = torch.gather(out, 1, index.unsqueeze(-1).expand(-1, -1, out.shape[-1]))
        return vecs * mask.unsqueeze(-1), mask

    def init_embeddings(self, matrix) -> None:
        """Copy a (len(vocab), hidden_dim) matrix into the token embedding table."""
        if self.cfg.variant != "small":
            raise ValueError("only the small encoder has a token embedding table to initialize")
        weight = torch.as_tensor(matrix, dtype=self.net.tok.weight.dtype)
        if weight.shape != self.net.tok.weight.shape:
            raise ValueError(f"embedding matrix shape {tuple(weight.shape)} != {tuple(self.net.tok.weight.shape)}")
        with torch.no_grad():
            self.net.tok.weight.copy_(weight)

    def encode(self, tokens: Sequence[str]) -> torch.Tensor:
        """One vector per token, shape (n, hidden_dim)."""
        vecs, _ = self.forward([tokens])
        return vecs[0, : len(tokens)]

    def sidecar(self) -> dict:
        return {
            "variant": self.cfg.variant,
            "hidden_dim": self.hidden_dim,
            "vocab_hash": self.vocab.hash,
            "pretrained_path": self.cfg.pretrained_path,
        }
