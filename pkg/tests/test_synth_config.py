import pytest
import torch

from opinion_ssl.checkpoints import CheckpointMismatch, load_sentiment, load_towe, save_sentiment, save_towe
from opinion_ssl.config import DESK_OVERRIDES, ConfigError, RunConfig, parse_kv
from opinion_ssl.corpus import decode_bio, encode_bio, load_labeled
from opinion_ssl.encoder import Vocabulary
from opinion_ssl.synth import make_corpus, synonym_lexicon, write_corpus
from opinion_ssl.towe import forward

from conftest import tiny_model, tiny_sentiment


def test_synth_deterministic_and_valid(tmp_path):
    corpus = make_corpus(500, 7)
    assert len(corpus.labeled) == 500
    a = write_corpus(corpus, tmp_path / "a")
    b = write_corpus(make_corpus(500, 7), tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    insts = load_labeled(a["labeled"])
    assert len(insts) == sum(len(s.instances()) for s in corpus.labeled)
    for x in insts:
        assert encode_bio(len(x.tokens), decode_bio(x.labels)) == list(x.labels)
    assert len(a["raw"].read_text().splitlines()) == 5000


def test_synth_shift_and_vocab():
    c = make_corpus(100, 1)
    train_vocab = {t for s in c.labeled for t in s.tokens}
    test_vocab = {t for s in c.test for t in s.tokens}
    assert test_vocab - train_vocab  # shifted words appear only outside the labeled set
    raw_vocab = {t for s in c.raw for t in s.tokens}
    assert test_vocab <= raw_vocab | train_vocab
    assert 80 <= len(train_vocab | test_vocab | raw_vocab) <= 250
    lex = synonym_lexicon()
    assert all(len(v) >= 1 for v in lex.values())


def test_synth_size_floor():
    with pytest.raises(ValueError):
        make_corpus(10)


def test_config_defaults_and_precedence(tmp_path):
    cfg = RunConfig()
    assert (cfg.T, cfg.tau, cfg.epochs, cfg.labeled_batch, cfg.unlabeled_batch) == (0.9, 0.7, 50, 16, 96)
    assert (cfg.lr_encoder, cfg.lr_other, cfg.sentiment_steps, cfg.sentiment_batch) == (2e-5, 2e-4, 3000, 128)
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nT = 0.8\nepochs = 3  # trailing\n")
    cfg = RunConfig.load(path, {"epochs": "7"})
    assert cfg.T == 0.8 and cfg.epochs == 7
    assert RunConfig.load(None, DESK_OVERRIDES).consistency_warmup == 5
    with pytest.raises(ConfigError):
        RunConfig.load(None, {"nope": 1})
    with pytest.raises(ConfigError):
        RunConfig.load(None, {"epochs": "many"})
    with pytest.raises(ConfigError):
        parse_kv("just words")
    with pytest.raises(ValueError):
        RunConfig.load(None, {"sentence_mode": "bogus"})


def test_towe_checkpoint_round_trip(tmp_path):
    model = tiny_model().float().eval()
    save_towe(model, tmp_path / "m.pt")
    back = load_towe(tmp_path / "m.pt", "small", model.encoder.vocab.hash)
    toks = ["the", "food", "was", "good"]
    assert torch.equal(forward(model, toks, (1, 2)).distributions, forward(back, toks, (1, 2)).distributions)
    import json
    side = json.loads((tmp_path / "m.json").read_text())
    assert {"variant", "hidden_dim", "vocab_hash", "version", "pos_dim", "refiner_layers", "encoder"} <= set(side)


def test_checkpoint_mismatch_names_hashes(tmp_path):
    model = tiny_model().float()
    save_towe(model, tmp_path / "m.pt")
    other = Vocabulary.build([["zzz"]]).hash
    with pytest.raises(CheckpointMismatch) as err:
        load_towe(tmp_path / "m.pt", "small", other)
    assert model.encoder.vocab.hash in str(err.value) and other in str(err.value)
    with pytest.raises(CheckpointMismatch):
        load_towe(tmp_path / "m.pt", "pretrained")
    save_sentiment(tiny_sentiment().float(), tmp_path / "s.pt")
    with pytest.raises(CheckpointMismatch):
        load_towe(tmp_path / "s.pt")
    clf = load_sentiment(tmp_path / "s.pt")
    assert not any(p.requires_grad for p in clf.parameters())
