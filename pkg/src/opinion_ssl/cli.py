"""Command-line entry point: synth, pseudo-targets, train-sentiment, train, eval, grid.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .checkpoints import CheckpointMismatch, file_hash, load_sentiment, load_towe, save_sentiment, save_towe
from .config import DESK_OVERRIDES, ConfigError, RunConfig
from .corpus import dump_unlabeled, load_labeled, load_unlabeled
from .evaluation import evaluate_model
from .pipeline import Workspace, set_deterministic
from .synth import make_corpus, write_corpus
from .training import format_grid, threshold_grid

logger = logging.getLogger("opinion_ssl")

INPUT_KEYS = ("labeled", "raw", "test", "lexicon", "sentiment_corpus", "pseudo_targets", "sentiment_ckpt")


class UsageError(Exception):
    pass


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        path = getattr(cfg, key)
        if not path:
            raise UsageError(f"missing --{key.replace('_', '-')}")
        if not Path(path).exists():
            raise UsageError(f"{key.replace('_', ' ')} file not found: {path}")


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs: dict[str, Path]) -> None:
    inputs = {k: {"path": getattr(cfg, k), "sha256": file_hash(getattr(cfg, k))}
              for k in INPUT_KEYS if getattr(cfg, k) and Path(getattr(cfg, k)).exists()}
    # the output directory does not influence results, so it stays out of the snapshot
    config = {k: v for k, v in asdict(cfg).items() if k != "out_dir"}
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": config,
        "inputs": inputs,
        "outputs": {k: {"path": p.name, "sha256": file_hash(p)} for k, p in outputs.items()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def cmd_synth(args) -> int:
    corpus = make_corpus(args.size, args.seed, args.raw_size, args.test_size)
    out = Path(args.out_dir)
    paths = write_corpus(corpus, out)
    desk = {k: v for k, v in DESK_OVERRIDES.items()}
    desk.update({key: str(path) for key, path in
                 (("labeled", paths["labeled"]), ("raw", paths["raw"]), ("test", paths["test"]),
                  ("lexicon", paths["lexicon"]), ("sentiment_corpus", paths["sentiment"]))})
    (out / "desk.cfg").write_text("# desk-scale settings for the synthetic corpus\n"
                                  + "".join(f"{k} = {v}\n" for k, v in desk.items()))
    print(f"wrote {len(corpus.labeled)} labeled, {len(corpus.raw)} raw, {len(corpus.test)} test sentences to {out}")
    return 0


def cmd_pseudo_targets(cfg: RunConfig, args) -> int:
    _require(cfg, "labeled", "raw")
    out = Path(cfg.out_dir)
    ws = Workspace.from_config(cfg)
    instances, dropped, tagger = ws.pseudo_targets()
    path = out / "pseudo_targets.jsonl"
    header = {
        "tagger_hash": tagger.fingerprint(),
        "tagger_valid_f1": tagger.best_f1,
        "raw_sentences": len(ws.raw),
        "dropped_sentences": dropped,
        "instances": len(instances),
    }
    dump_unlabeled(instances, path, header)
    write_manifest(out, "pseudo-targets", cfg, {"pseudo_targets": path})
    print(f"kept {len(ws.raw) - dropped} raw sentences ({len(instances)} targets), dropped {dropped}")
    return 0


def cmd_train_sentiment(cfg: RunConfig, args) -> int:
    _require(cfg, "labeled", "sentiment_corpus")
    out = Path(cfg.out_dir)
    clf = Workspace.from_config(cfg).train_sentiment()
    path = out / "sentiment.pt"
    save_sentiment(clf, path)
    write_manifest(out, "train-sentiment", cfg, {"sentiment": path})
    print(f"sentiment classifier written to {path}")
    return 0


def apply_ablation(cfg: RunConfig, args) -> None:
    flags = [f for f in ("no_sentiment", "no_sentence_filter", "no_word_filter", "supervised_only")
             if getattr(args, f, False)]
    if "supervised_only" in flags and len(flags) > 1:
        raise UsageError("--supervised-only cannot be combined with other ablation flags")
    if "no_sentiment" in flags and "no_sentence_filter" in flags:
        raise UsageError("--no-sentiment and --no-sentence-filter are mutually exclusive")
    if "no_sentiment" in flags:
        cfg.sentence_mode = "avg"
    if "no_sentence_filter" in flags:
        cfg.sentence_mode = "off"
    if "no_word_filter" in flags:
        cfg.word_mode = "off"
    if "supervised_only" in flags:
        cfg.consistency = "off"


def cmd_train(cfg: RunConfig, args) -> int:
    apply_ablation(cfg, args)
    _require(cfg, "labeled")
    fcfg = cfg.filter_config()
    unlabeled, sentiment = [], None
    if fcfg.consistency == "on":
        _require(cfg, "pseudo_targets")
        _, unlabeled = load_unlabeled(cfg.pseudo_targets)
        if fcfg.sentence_mode == "senti":
            _require(cfg, "sentiment_ckpt")
            sentiment = load_sentiment(cfg.sentiment_ckpt)
    ws = Workspace.from_config(cfg)
    if sentiment is not None and sentiment.encoder.vocab.hash != ws.vocab.hash:
        logger.info("sentiment classifier uses its own vocabulary (%s)", sentiment.encoder.vocab.hash)
    out = Path(cfg.out_dir)
    log_path = out / "train_log.jsonl"
    result = ws.train(unlabeled, sentiment, fcfg, log_path=log_path)
    ckpt = out / "model.pt"
    save_towe(result.model, ckpt)
    outputs = {"model": ckpt, "train_log": log_path}
    if cfg.test and Path(cfg.test).exists():
        report = evaluate_model(result.model, load_labeled(cfg.test))
        (out / "eval.json").write_text(report.to_json() + "\n")
        outputs["eval"] = out / "eval.json"
        print(report.table())
    write_manifest(out, "train", cfg, outputs)
    print(f"best validation F1 {result.best_f1:.4f}; checkpoint {ckpt}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    _require(cfg, "test")
    expect_hash = None
    if cfg.labeled and cfg.raw and Path(cfg.labeled).exists() and Path(cfg.raw).exists():
        expect_hash = Workspace.from_config(cfg).vocab.hash
    model = load_towe(args.checkpoint, expect_variant=cfg.encoder, expect_vocab_hash=expect_hash)
    report = evaluate_model(model, load_labeled(cfg.test))
    out = Path(cfg.out_dir)
    (out / "eval.json").write_text(report.to_json() + "\n")
    print(report.table())
    write_manifest(out, "eval", cfg, {"eval": out / "eval.json"})
    return 0


def cmd_grid(cfg: RunConfig, args) -> int:
    apply_ablation(cfg, args)
    _require(cfg, "labeled", "pseudo_targets")
    fcfg = cfg.filter_config()
    sentiment = None
    if fcfg.sentence_mode == "senti":
        _require(cfg, "sentiment_ckpt")
        sentiment = load_sentiment(cfg.sentiment_ckpt)
    _, unlabeled = load_unlabeled(cfg.pseudo_targets)
    ws = Workspace.from_config(cfg)
    test = load_labeled(cfg.test) if cfg.test and Path(cfg.test).exists() else None
    grid = threshold_grid(ws.split, unlabeled, ws.components(sentiment), args.T, args.tau, fcfg,
                          cfg.train_config(), cfg.seed, test)
    out = Path(cfg.out_dir)
    (out / "grid.json").write_text(json.dumps(grid, indent=2) + "\n")
    print(format_grid(grid, "test" if test else "valid"))
    write_manifest(out, "grid", cfg, {"grid": out / "grid.json"})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opinion-ssl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic desk-scale corpus")
    p.add_argument("--size", type=int, default=500, help="labeled sentences (>= 50)")
    p.add_argument("--raw-size", type=int, default=None, help="raw sentences (default 10 x size)")
    p.add_argument("--test-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)
        for key in INPUT_KEYS:
            p.add_argument("--" + key.replace("_", "-"), dest=key)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")

    def ablations(p):
        p.add_argument("--no-sentiment", action="store_true", help="gate sentences on the plain average confidence")
        p.add_argument("--no-sentence-filter", action="store_true")
        p.add_argument("--no-word-filter", action="store_true")
        p.add_argument("--supervised-only", action="store_true")

    for name, help_ in (("pseudo-targets", "train the target tagger and label the raw corpus"),
                        ("train-sentiment", "pretrain the attention sentiment classifier")):
        common(sub.add_parser(name, help=help_))
    p = sub.add_parser("train", help="train the opinion tagger with consistency regularization")
    common(p)
    ablations(p)
    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p = sub.add_parser("grid", help="sweep sentence/word thresholds")
    common(p)
    ablations(p)
    p.add_argument("--T", type=_floats, default=[0.5, 0.7, 0.9])
    p.add_argument("--tau", type=_floats, default=[0.5, 0.7, 0.9])
    return parser


COMMANDS = {
    "pseudo-targets": cmd_pseudo_targets,
    "train-sentiment": cmd_train_sentiment,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid": cmd_grid,
}


def load_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in (*INPUT_KEYS, "out_dir", "seed"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    return RunConfig.load(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    set_deterministic()
    try:
        if args.command == "synth":
            if args.size < 50:
                raise UsageError("--size must be at least 50")
            return cmd_synth(args)
        if args.config and not Path(args.config).exists():
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except CheckpointMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and map to exit code 1
        logger.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
