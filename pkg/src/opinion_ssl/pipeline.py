"""Wires corpora, pretrained pieces and training together for one run config."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import torch

from .config import RunConfig
from .corpus import DatasetSplit, TOWEInstance, UnlabeledInstance, load_labeled, load_raw, split_train_valid
from .encoder import EncoderHandle, Vocabulary, cooccurrence_embeddings
from .perturb import SynonymLexicon
from .sentiment import SentimentClassifier, load_sentiment_corpus, pretrain_sentiment
from .target_labeler import TargetTagger, pseudo_label_targets, train_target_tagger
from .training import Components, TrainResult, train_mgcr

logger = logging.getLogger(__name__)


def set_deterministic() -> None:
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


@dataclass
class Workspace:
    """In-memory inputs for one configuration; derived pieces are built lazily."""

    cfg: RunConfig
    labeled: list[TOWEInstance]
    raw: list[list[str]] = field(default_factory=list)
    lexicon: SynonymLexicon = field(default_factory=SynonymLexicon)
    sentiment_corpus: list = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: RunConfig) -> Workspace:
        max_len = cfg.max_len if cfg.encoder == "small" else 128
        return cls(
            cfg,
            load_labeled(cfg.labeled),
            load_raw(cfg.raw, max_len=max_len) if cfg.raw else [],
            SynonymLexicon.load(cfg.lexicon) if cfg.lexicon else SynonymLexicon(),
            load_sentiment_corpus(cfg.sentiment_corpus) if cfg.sentiment_corpus else [],
        )

    @cached_property
    def vocab(self) -> Vocabulary:
        vocab = Vocabulary.build([x.tokens for x in self.labeled] + self.raw)
        for word, syns in sorted(self.lexicon.items()):
            for tok in (word, *syns):
                vocab.add(tok)
        vocab.add(self.cfg.mask_symbol)
        return vocab

    @cached_property
    def embedding_init(self):
        if self.cfg.encoder != "small" or self.cfg.embedding_init == "random":
            return None
        if self.cfg.embedding_init != "cooccurrence":
            raise ValueError(f"unknown embedding_init {self.cfg.embedding_init!r}")
        return cooccurrence_embeddings([x.tokens for x in self.labeled] + self.raw, self.vocab, self.cfg.hidden_dim)

    @cached_property
    def split(self) -> DatasetSplit:
        return split_train_valid(self.labeled, self.cfg.seed, self.cfg.valid_fraction)

    def components(self, sentiment: SentimentClassifier | None = None) -> Components:
        c = self.cfg
        return Components(self.vocab, c.encoder_config(), c.towe_config(), sentiment, self.lexicon,
                          c.perturb_config(), self.embedding_init)

    def new_encoder(self, seed: int) -> EncoderHandle:
        torch.manual_seed(seed)
        return self.components().build_encoder()

    def train_tagger(self) -> TargetTagger:
        return train_target_tagger(self.split.train, self.split.valid, self.new_encoder(self.cfg.seed),
                                   self.cfg.tagger_config())

    def pseudo_targets(self, tagger: TargetTagger | None = None) -> tuple[list[UnlabeledInstance], int, TargetTagger]:
        tagger = tagger or self.train_tagger()
        instances, dropped = pseudo_label_targets(tagger, self.raw)
        logger.info("pseudo targets: %d instances, %d raw sentences dropped", len(instances), dropped)
        return instances, dropped, tagger

    def train_sentiment(self) -> SentimentClassifier:
        if not self.sentiment_corpus:
            raise ValueError("no sentiment corpus configured")
        return pretrain_sentiment(self.sentiment_corpus, self.new_encoder(self.cfg.seed), self.cfg.sentiment_config())

    def train(self, unlabeled, sentiment=None, fcfg=None, seed=None, log_path=None) -> TrainResult:
        c = self.cfg
        return train_mgcr(self.split, unlabeled, self.components(sentiment), fcfg or c.filter_config(),
                          c.train_config(), c.seed if seed is None else seed, log_path)
