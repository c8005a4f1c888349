"""Joint supervised + consistency training, checkpointing and threshold sweeps.

Randomness: ``np.random.SeedSequence(seed)`` is split into three streams,
(batch order, perturbation, torch).  The torch stream seeds parameter
initialization and dropout; perturbation seeds are derived from the global
step and the sentence's slot in the batch, so they need no saved state.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .consistency import SC_BINS, FilterConfig, Perturber, consistency_loss
from .corpus import DatasetSplit, TOWEInstance, UnlabeledInstance, sample_batches
from .encoder import EncoderConfig, EncoderHandle, Vocabulary
from .evaluation import evaluate_model
from .perturb import PerturbConfig, SynonymLexicon
from .sentiment import SentimentClassifier, attention_batch
from .towe import ToweConfig, ToweModel, supervised_loss

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    patience: int = 5
    labeled_batch: int = 16
    unlabeled_batch: int = 96
    lr_encoder: float = 2e-5
    lr_other: float = 2e-4
    weight_decay: float = 0.01
    # epochs of supervised-only updates before the consistency term is switched on
    consistency_warmup: int = 0


@dataclass
class Components:
    vocab: Vocabulary
    encoder_cfg: EncoderConfig = field(default_factory=EncoderConfig)
    towe_cfg: ToweConfig = field(default_factory=ToweConfig)
    sentiment: SentimentClassifier | None = None
    lexicon: SynonymLexicon = field(default_factory=SynonymLexicon)
    perturb_cfg: PerturbConfig = field(default_factory=PerturbConfig)
    embedding_init: np.ndarray | None = None

    def build_encoder(self) -> EncoderHandle:
        enc = EncoderHandle(self.vocab, self.encoder_cfg)
        if self.embedding_init is not None:
            enc.init_embeddings(self.embedding_init)
        return enc

    def build_model(self) -> ToweModel:
        return ToweModel(self.build_encoder(), self.towe_cfg)


@dataclass
class TrainResult:
    model: ToweModel
    log: list[dict]
    best_f1: float
    state: dict


def seed_streams(seed: int) -> dict[str, int]:
    names = ("batches", "perturb", "torch")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: int(c.generate_state(1)[0]) for n, c in zip(names, children)}


def make_optimizer(model: ToweModel, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW([
        {"params": model.encoder_parameters(), "lr": cfg.lr_encoder},
        {"params": model.other_parameters(), "lr": cfg.lr_other},
    ], weight_decay=cfg.weight_decay)


def sc_histogram(scores: Sequence[float]) -> list[int]:
    """Counts of sentence scores below 0.5, in [0.5, 0.6), ..., and >= 0.9."""
    return np.bincount(np.digitize(scores, SC_BINS), minlength=len(SC_BINS) + 1).tolist()


def train_step(model, optimizer, labeled_batch, unlabeled_batch, perturber, sentiment, fcfg: FilterConfig,
               step: int, alphas=None, dump_dir=None) -> dict:
    model.train()
    l_s = supervised_loss(model, labeled_batch)
    l_c, stats = consistency_loss(model, unlabeled_batch, perturber, sentiment, fcfg, step, alphas)
    loss = l_s + l_c
    if not torch.isfinite(loss):
        _dump_batch(dump_dir, step, labeled_batch, unlabeled_batch, l_s, l_c)
        raise TrainingDiverged(f"non-finite loss at step {step}: L_s={l_s.item()} L_c={l_c.item()}")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return {
        "step": step,
        "L_s": l_s.item(),
        "L_c": l_c.item(),
        "sentences_kept": stats.sentences_kept,
        "tokens_kept": stats.tokens_kept,
        "sc_hist": sc_histogram(stats.sentence_scores) if stats.sentence_scores else [],
    }


def _dump_batch(dump_dir, step, labeled, unlabeled, l_s, l_c) -> None:
    if dump_dir is None:
        return
    path = Path(dump_dir) / "diverged_batch.json"
    path.write_text(json.dumps({
        "step": step, "L_s": l_s.item(), "L_c": l_c.item(),
        "labeled": [x.to_record() for x in labeled],
        "unlabeled": [x.to_record() for x in unlabeled],
    }, indent=1))
    logger.error("diverged at step %d, batch written to %s", step, path)


def train_mgcr(
    split: DatasetSplit,
    unlabeled: Sequence[UnlabeledInstance],
    components: Components,
    fcfg: FilterConfig,
    tcfg: TrainConfig | None = None,
    seed: int = 0,
    log_path=None,
    resume: dict | None = None,
    stop_after_epoch: int | None = None,
) -> TrainResult:
    """Train a ToweModel on L = L_s + L_c, keeping the best validation-F1 weights.

    ``resume`` takes the ``state`` of an earlier result (saved at an epoch
    boundary) and continues the exact same trajectory.
    """
    tcfg = tcfg or TrainConfig()
    streams = seed_streams(seed)
    torch.manual_seed(streams["torch"])
    model = components.build_model()
    optimizer = make_optimizer(model, tcfg)
    pool = list(unlabeled) if fcfg.consistency == "on" else []
    stream = sample_batches(split.train, pool, tcfg.labeled_batch, tcfg.unlabeled_batch, streams["batches"])
    perturber = Perturber(replace(components.perturb_cfg, seed=streams["perturb"]), components.lexicon)

    alpha_cache = {}
    if pool and fcfg.sentence_mode == "senti":
        if components.sentiment is None:
            raise ValueError("sentence_mode 'senti' needs a pretrained sentiment classifier")
        uniq = list(dict.fromkeys(x.tokens for x in pool))
        alpha_cache = dict(zip(uniq, attention_batch(components.sentiment, uniq)))

    log: list[dict] = []
    start_epoch, step, best_f1, best_state, bad_epochs = 0, 0, -1.0, None, 0
    if resume is not None:
        model.load_state_dict(resume["model"])
        optimizer.load_state_dict(resume["optimizer"])
        stream.load_state_dict(resume["stream"])
        torch.set_rng_state(resume["torch_rng"])
        start_epoch, step = resume["epoch"], resume["step"]
        best_f1, best_state, bad_epochs = resume["best_f1"], resume["best_state"], resume["bad_epochs"]
        log = list(resume["log"])

    log_file = open(log_path, "a" if resume else "w", encoding="utf-8") if log_path else None
    dump_dir = Path(log_path).parent if log_path else None
    batches = iter(stream)
    next_epoch = start_epoch
    try:
        for epoch in range(start_epoch, tcfg.epochs):
            if bad_epochs >= tcfg.patience:
                break
            for _ in range(stream.steps_per_epoch):
                lab, unl = next(batches)
                if epoch < tcfg.consistency_warmup:
                    unl = []
                alphas = [alpha_cache[x.tokens] for x in unl] if alpha_cache else None
                rec = train_step(model, optimizer, lab, unl, perturber, components.sentiment, fcfg, step, alphas, dump_dir)
                rec["epoch"] = epoch
                _emit(rec, log, log_file)
                step += 1
            report = evaluate_model(model, split.valid)
            # ties go to the later checkpoint; only a drop counts against patience
            improved = report.f1 >= best_f1
            if improved:
                best_f1, best_state, bad_epochs = report.f1, copy.deepcopy(model.state_dict()), 0
            else:
                bad_epochs += 1
            _emit({"epoch": epoch, "val_P": report.precision, "val_R": report.recall, "val_F1": report.f1,
                   "best": improved}, log, log_file)
            next_epoch = epoch + 1
            if stop_after_epoch is not None and next_epoch >= stop_after_epoch:
                break
    finally:
        if log_file:
            log_file.close()

    state = {
        "model": copy.deepcopy(model.state_dict()),
        "optimizer": copy.deepcopy(optimizer.state_dict()),
        "stream": stream.state_dict(),
        "torch_rng": torch.get_rng_state(),
        "epoch": next_epoch,
        "step": step,
        "best_f1": best_f1,
        "best_state": best_state,
        "bad_epochs": bad_epochs,
        "log": list(log),
    }
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, log, best_f1, state)


def _emit(rec: dict, log: list, fh) -> None:
    log.append(rec)
    if fh:
        fh.write(json.dumps(rec) + "\n")


def grid_key(T: float, tau: float) -> str:
    return f"T={T:g},tau={tau:g}"


def threshold_grid(
    split: DatasetSplit,
    unlabeled: Sequence[UnlabeledInstance],
    components: Components,
    T_values: Sequence[float],
    tau_values: Sequence[float],
    base: FilterConfig | None = None,
    tcfg: TrainConfig | None = None,
    seed: int = 0,
    test: Sequence[TOWEInstance] | None = None,
) -> dict:
    """One full training run per (T, tau) cell."""
    if not T_values or not tau_values:
        raise ValueError("threshold lists must be nonempty")
    base = base or FilterConfig()
    cells = {}
    for T in T_values:
        for tau in tau_values:
            res = train_mgcr(split, unlabeled, components, replace(base, T=T, tau=tau), tcfg, seed)
            steps = [r for r in res.log if "step" in r]
            valid = evaluate_model(res.model, split.valid)
            cell = {
                "T": T, "tau": tau,
                "valid": {"P": valid.precision, "R": valid.recall, "F1": valid.f1},
                "sentences_kept": sum(r["sentences_kept"] for r in steps),
                "tokens_kept": sum(r["tokens_kept"] for r in steps),
                "first_step_sentences_kept": steps[0]["sentences_kept"] if steps else 0,
            }
            if test is not None:
                rep = evaluate_model(res.model, test)
                cell["test"] = {"P": rep.precision, "R": rep.recall, "F1": rep.f1}
            cells[grid_key(T, tau)] = cell
    best = max(cells, key=lambda k: cells[k]["valid"]["F1"])
    return {"T_values": list(T_values), "tau_values": list(tau_values), "cells": cells, "best": best}


def format_grid(grid: dict, which: str = "valid") -> str:
    """Rows are tau, column groups are T, each group P / R / F1 in percent."""
    Ts, taus = grid["T_values"], grid["tau_values"]
    lines = ["tau\\T  " + "  ".join(f"{'T=' + format(T, 'g'):^23}" for T in Ts)]
    lines.append("       " + "  ".join(f"{'P':>7}{'R':>8}{'F1':>8}" for _ in Ts))
    for tau in taus:
        row = []
        for T in Ts:
            m = grid["cells"][grid_key(T, tau)].get(which) or {}
            row.append("".join(f"{100 * m.get(k, math.nan):>8.2f}" for k in ("P", "R", "F1"))[1:])
        lines.append(f"{tau:<6g} " + "  ".join(row))
    return "\n".join(lines)
