"""Flat run configuration: defaults < key = value file < command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .consistency import FilterConfig
from .encoder import EncoderConfig
from .perturb import PerturbConfig
from .sentiment import SentimentTrainConfig
from .target_labeler import TaggerTrainConfig
from .towe import ToweConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # inputs / outputs
    labeled: str = ""
    raw: str = ""
    test: str = ""
    lexicon: str = ""
    sentiment_corpus: str = ""
    pseudo_targets: str = ""
    sentiment_ckpt: str = ""
    out_dir: str = "runs"
    # filtering
    T: float = 0.9
    tau: float = 0.7
    sentence_mode: str = "senti"
    word_mode: str = "on"
    consistency: str = "on"
    normalize: str = "all"
    # perturbation
    mask_rate: float = 0.15
    synonym_rate: float = 0.15
    mask_symbol: str = "[MASK]"
    # encoder / model
    encoder: str = "small"
    pretrained_path: str = ""
    hidden_dim: int = 64
    encoder_layers: int = 2
    encoder_heads: int = 4
    encoder_ff: int = 128
    max_len: int = 64
    dropout: float = 0.1
    embedding_init: str = "cooccurrence"
    pos_dim: int = 8
    refiner_layers: int = 2
    refiner_heads: int = 4
    refiner_ff: int = 128
    # TOWE training
    labeled_batch: int = 16
    unlabeled_batch: int = 96
    lr_encoder: float = 2e-5
    lr_other: float = 2e-4
    epochs: int = 50
    patience: int = 5
    consistency_warmup: int = 0
    valid_fraction: float = 0.2
    seed: int = 0
    # sentiment classifier
    sentiment_steps: int = 3000
    sentiment_batch: int = 128
    sentiment_lr_encoder: float = 1e-5
    sentiment_lr_other: float = 1e-4
    # target tagger
    tagger_epochs: int = 10
    tagger_lr_encoder: float = 2e-5
    tagger_lr_other: float = 2e-4

    def set(self, key: str, value) -> None:
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        kind = types[key]
        try:
            if kind == "int":
                value = int(value)
            elif kind == "float":
                value = float(value)
            else:
                value = str(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
        setattr(self, key, value)

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> RunConfig:
        cfg = cls()
        if path:
            for key, value in parse_kv(Path(path).read_text(encoding="utf-8"), str(path)).items():
                cfg.set(key, value)
        for key, value in (overrides or {}).items():
            cfg.set(key, value)
        cfg.filter_config()  # validate early
        return cfg

    def dump(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.T, self.tau, self.sentence_mode, self.word_mode, self.consistency, self.normalize)

    def perturb_config(self) -> PerturbConfig:
        return PerturbConfig(self.mask_rate, self.synonym_rate, self.mask_symbol, self.seed)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.encoder, self.hidden_dim, self.encoder_layers, self.encoder_heads,
                             self.encoder_ff, self.dropout, self.max_len, self.pretrained_path)

    def towe_config(self) -> ToweConfig:
        return ToweConfig(self.pos_dim, self.refiner_layers, self.refiner_heads, self.refiner_ff, self.dropout)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.patience, self.labeled_batch, self.unlabeled_batch,
                           self.lr_encoder, self.lr_other, consistency_warmup=self.consistency_warmup)

    def sentiment_config(self) -> SentimentTrainConfig:
        return SentimentTrainConfig(self.sentiment_steps, self.sentiment_batch, self.sentiment_lr_encoder,
                                    self.sentiment_lr_other, self.seed)

    def tagger_config(self) -> TaggerTrainConfig:
        return TaggerTrainConfig(self.tagger_epochs, self.labeled_batch, self.tagger_lr_encoder,
                                 self.tagger_lr_other, self.seed)


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


# Settings used for CPU-sized runs on the synthetic corpus.
DESK_OVERRIDES = {
    "lr_encoder": 1e-3,
    "lr_other": 1e-3,
    "epochs": 12,
    "patience": 12,
    "consistency_warmup": 5,
    "sentiment_steps": 300,
    "sentiment_batch": 64,
    "sentiment_lr_encoder": 1e-3,
    "sentiment_lr_other": 1e-3,
    "tagger_epochs": 5,
    "tagger_lr_encoder": 1e-3,
    "tagger_lr_other": 1e-3,
}
