import json
import math

import pytest
import torch

from opinion_ssl.consistency import FilterConfig, Perturber, identity_perturber
from opinion_ssl.corpus import UnlabeledInstance, split_train_valid
from opinion_ssl.encoder import EncoderConfig, Vocabulary
from opinion_ssl.perturb import PerturbConfig
from opinion_ssl.synth import make_corpus, synonym_lexicon
from opinion_ssl.towe import ToweConfig
from opinion_ssl.training import (
    Components, TrainConfig, TrainingDiverged, format_grid, make_optimizer, sc_histogram, seed_streams,
    threshold_grid, train_mgcr, train_step,
)


@pytest.fixture(scope="module")
def setup():
    corpus = make_corpus(size=60, seed=3, raw_size=120, test_size=20)
    labeled = [i for s in corpus.labeled for i in s.instances()]
    raw = [s.tokens for s in corpus.raw]
    unlabeled = [UnlabeledInstance(s.tokens, inst.target_span, str(k))
                 for k, s in enumerate(corpus.raw) for inst in s.instances()]
    vocab = Vocabulary.build([x.tokens for x in labeled] + raw)
    vocab.add("[MASK]")
    comps = Components(vocab, EncoderConfig(hidden_dim=16, layers=1, heads=2, ff_dim=32),
                       ToweConfig(pos_dim=4, refiner_layers=1, refiner_heads=2, refiner_ff=32),
                       lexicon=synonym_lexicon(), perturb_cfg=PerturbConfig())
    return split_train_valid(labeled, 0), unlabeled, comps


TCFG = TrainConfig(epochs=3, patience=3, labeled_batch=16, unlabeled_batch=24, lr_encoder=1e-3, lr_other=1e-3)
AVG = FilterConfig(0.4, 0.4, sentence_mode="avg")


def params(model):
    return [p.detach().clone() for p in model.parameters()]


def test_defaults():
    t = TrainConfig()
    assert (t.epochs, t.labeled_batch, t.unlabeled_batch, t.lr_encoder, t.lr_other) == (50, 16, 96, 2e-5, 2e-4)


def test_zero_gate_step_equals_supervised_step(setup):
    split, unlabeled, comps = setup
    results = []
    for fcfg, unl in ((FilterConfig(1.0, 0.0, "avg"), unlabeled[:24]), (FilterConfig(consistency="off"), [])):
        torch.manual_seed(0)
        model = comps.build_model()
        opt = make_optimizer(model, TCFG)
        torch.manual_seed(1)
        rec = train_step(model, opt, split.train[:16], unl, identity_perturber, None, fcfg, step=0)
        results.append((params(model), rec))
    (a, rec_a), (b, rec_b) = results
    assert rec_a["L_c"] == 0.0 and rec_a["sentences_kept"] == 0
    assert all(torch.equal(x, y) for x, y in zip(a, b))


def test_consistency_off_matches_supervised_run(setup):
    split, unlabeled, comps = setup
    off = train_mgcr(split, unlabeled, comps, FilterConfig(consistency="off"), TCFG, seed=2)
    sup = train_mgcr(split, [], comps, FilterConfig(consistency="off"), TCFG, seed=2)
    assert off.log == sup.log
    assert all(r["L_c"] == 0.0 for r in off.log if "step" in r)
    assert all(torch.equal(x, y) for x, y in zip(params(off.model), params(sup.model)))


def test_log_format_and_determinism(setup, tmp_path):
    split, unlabeled, comps = setup
    a = train_mgcr(split, unlabeled, comps, AVG, TCFG, seed=1, log_path=tmp_path / "a.jsonl")
    b = train_mgcr(split, unlabeled, comps, AVG, TCFG, seed=1, log_path=tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    lines = [json.loads(l) for l in (tmp_path / "a.jsonl").read_text().splitlines()]
    steps = [r for r in lines if "step" in r]
    epochs = [r for r in lines if "val_F1" in r]
    assert len(epochs) == 3
    assert set(steps[0]) >= {"step", "L_s", "L_c", "sentences_kept", "tokens_kept", "sc_hist"}
    assert sum(steps[0]["sc_hist"]) == 24
    assert any(r["L_c"] > 0 for r in steps)
    assert a.best_f1 == max(r["val_F1"] for r in epochs)
    assert all(torch.equal(x, y) for x, y in zip(params(a.model), params(b.model)))


def test_resume_reproduces_trajectory(setup):
    split, unlabeled, comps = setup
    full = train_mgcr(split, unlabeled, comps, AVG, TCFG, seed=4)
    first = train_mgcr(split, unlabeled, comps, AVG, TCFG, seed=4, stop_after_epoch=1)
    rest = train_mgcr(split, unlabeled, comps, AVG, TCFG, seed=4, resume=first.state)
    assert rest.log == full.log
    assert all(torch.equal(x, y) for x, y in zip(params(rest.model), params(full.model)))


def test_divergence_dumps_batch(setup, tmp_path):
    split, unlabeled, comps = setup
    model = comps.build_model()
    with torch.no_grad():
        model.head.bias.fill_(math.nan)
    with pytest.raises(TrainingDiverged):
        train_step(model, make_optimizer(model, TCFG), split.train[:4], [], identity_perturber, None,
                   FilterConfig(consistency="off"), step=7, dump_dir=tmp_path)
    dump = json.loads((tmp_path / "diverged_batch.json").read_text())
    assert dump["step"] == 7 and len(dump["labeled"]) == 4


def test_senti_mode_requires_classifier(setup):
    split, unlabeled, comps = setup
    with pytest.raises(ValueError):
        train_mgcr(split, unlabeled, comps, FilterConfig(), TCFG, seed=0)


def test_sentiment_frozen_during_training(setup):
    from opinion_ssl.sentiment import SentimentClassifier

    split, unlabeled, comps = setup
    torch.manual_seed(0)
    clf = SentimentClassifier(comps.build_encoder()).freeze()
    before = params(clf)
    comps_s = Components(comps.vocab, comps.encoder_cfg, comps.towe_cfg, clf, comps.lexicon, comps.perturb_cfg)
    train_mgcr(split, unlabeled, comps_s, FilterConfig(0.4, 0.4), TrainConfig(epochs=1, unlabeled_batch=24), seed=0)
    assert all(torch.equal(x, y) for x, y in zip(before, params(clf)))


def test_grid(setup):
    split, unlabeled, comps = setup
    tcfg = TrainConfig(epochs=1, patience=1, unlabeled_batch=24, lr_encoder=1e-3, lr_other=1e-3)
    grid = threshold_grid(split, unlabeled, comps, [0.3, 0.4, 0.5], [0.4], AVG, tcfg, seed=0)
    assert len(grid["cells"]) == 3
    kept = [grid["cells"][f"T={T:g},tau=0.4"]["first_step_sentences_kept"] for T in (0.3, 0.4, 0.5)]
    assert kept[0] >= kept[1] >= kept[2]
    assert "T=0.3" in format_grid(grid)
    one = threshold_grid(split, unlabeled, comps, [0.9], [0.7], AVG, tcfg, seed=0)
    assert list(one["cells"]) == ["T=0.9,tau=0.7"] and one["best"] == "T=0.9,tau=0.7"
    with pytest.raises(ValueError):
        threshold_grid(split, unlabeled, comps, [], [0.7], AVG, tcfg)


def test_helpers():
    assert sc_histogram([0.1, 0.55, 0.95, 0.9]) == [1, 1, 0, 0, 0, 2]
    assert seed_streams(0) == seed_streams(0)
    assert len(set(seed_streams(0).values())) == 3
