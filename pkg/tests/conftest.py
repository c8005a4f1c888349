import numpy as np
import pytest
import torch

from opinion_ssl.corpus import TOWEInstance, UnlabeledInstance, encode_bio
from opinion_ssl.encoder import EncoderConfig, EncoderHandle, Vocabulary
from opinion_ssl.sentiment import SentimentClassifier
from opinion_ssl.towe import ToweConfig, ToweModel

WORDS = ["the", "food", "was", "good", "bad", "service", "slow", "staff", "very", "not", "pizza", "."]


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def tiny_vocab() -> Vocabulary:
    return Vocabulary.build([WORDS])


def tiny_encoder(seed=0, hidden=16, dtype=torch.float64, max_len=16) -> EncoderHandle:
    torch.manual_seed(seed)
    enc = EncoderHandle(tiny_vocab(), EncoderConfig(hidden_dim=hidden, layers=1, heads=2, ff_dim=32,
                                                    dropout=0.0, max_len=max_len))
    return enc.to(dtype)


def tiny_model(seed=0, hidden=16, dtype=torch.float64) -> ToweModel:
    enc = tiny_encoder(seed, hidden, dtype)
    torch.manual_seed(seed + 1000)
    model = ToweModel(enc, ToweConfig(pos_dim=4, refiner_layers=1, refiner_heads=2, refiner_ff=32, dropout=0.0))
    return model.to(dtype)


def tiny_sentiment(seed=0, hidden=16, dtype=torch.float64) -> SentimentClassifier:
    enc = tiny_encoder(seed + 7, hidden, dtype)
    torch.manual_seed(seed + 2000)
    return SentimentClassifier(enc).to(dtype).freeze()


def random_tokens(rng, n):
    return [WORDS[i] for i in rng.integers(len(WORDS), size=n)]


def random_span(rng, n):
    s = int(rng.integers(n))
    return (s, int(rng.integers(s + 1, n + 1)))


def random_labeled(rng, n) -> TOWEInstance:
    toks = random_tokens(rng, n)
    target = random_span(rng, n)
    free = [i for i in range(n) if not target[0] <= i < target[1]]
    spans = [(i, i + 1) for i in free if rng.random() < 0.4]
    return TOWEInstance(toks, target, encode_bio(n, spans))


def random_unlabeled(rng, n) -> UnlabeledInstance:
    return UnlabeledInstance(random_tokens(rng, n), random_span(rng, n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
