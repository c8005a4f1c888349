"""Checkpoint blobs (torch.save) with JSON sidecars."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import torch

from . import __version__
from .encoder import EncoderConfig, EncoderHandle, Vocabulary
from .sentiment import SentimentClassifier
from .towe import ToweConfig, ToweModel


class CheckpointMismatch(ValueError):
    pass


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _write(path, blob: dict, sidecar: dict) -> None:
    torch.save(blob, path)
    sidecar = {**sidecar, "version": __version__, "blob_sha256": file_hash(path)}
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def _read(path, expect_kind: str) -> tuple[dict, dict]:
    side = json.loads(sidecar_path(path).read_text())
    if side.get("kind") != expect_kind:
        raise CheckpointMismatch(f"{path} holds a {side.get('kind')!r} checkpoint, expected {expect_kind!r}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    vocab = Vocabulary()
    vocab.itos = list(blob["vocab"])
    vocab.stoi = {t: i for i, t in enumerate(vocab.itos)}
    if vocab.hash != side["vocab_hash"]:
        raise CheckpointMismatch(f"vocabulary hash {vocab.hash} in {path} does not match sidecar {side['vocab_hash']}")
    blob["vocab"] = vocab
    return blob, side


def save_towe(model: ToweModel, path) -> None:
    enc = model.encoder
    _write(path, {
        "state_dict": model.state_dict(),
        "vocab": enc.vocab.itos,
        "encoder_cfg": asdict(enc.cfg),
        "towe_cfg": asdict(model.cfg),
    }, {
        "kind": "towe",
        **enc.sidecar(),
        "pos_dim": model.cfg.pos_dim,
        "refiner_layers": model.cfg.refiner_layers,
        "encoder": enc.cfg.pretrained_path or enc.cfg.variant,
    })


def load_towe(path, expect_variant: str | None = None, expect_vocab_hash: str | None = None) -> ToweModel:
    blob, side = _read(path, "towe")
    if expect_variant is not None and expect_variant != side["variant"]:
        raise CheckpointMismatch(
            f"checkpoint encoder {side['variant']} (vocab {side['vocab_hash']}) does not match "
            f"configured encoder {expect_variant} (vocab {expect_vocab_hash or 'n/a'})")
    if expect_vocab_hash is not None and expect_vocab_hash != side["vocab_hash"]:
        raise CheckpointMismatch(
            f"checkpoint vocab hash {side['vocab_hash']} does not match configured vocab hash {expect_vocab_hash}")
    model = ToweModel(EncoderHandle(blob["vocab"], EncoderConfig(**blob["encoder_cfg"])), ToweConfig(**blob["towe_cfg"]))
    model.load_state_dict(blob["state_dict"])
    return model.eval()


def save_sentiment(clf: SentimentClassifier, path) -> None:
    enc = clf.encoder
    _write(path, {"state_dict": clf.state_dict(), "vocab": enc.vocab.itos, "encoder_cfg": asdict(enc.cfg)},
           {"kind": "sentiment", **enc.sidecar()})


def load_sentiment(path) -> SentimentClassifier:
    blob, _ = _read(path, "sentiment")
    clf = SentimentClassifier(EncoderHandle(blob["vocab"], EncoderConfig(**blob["encoder_cfg"])))
    clf.load_state_dict(blob["state_dict"])
    return clf.freeze()
