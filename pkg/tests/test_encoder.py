import numpy as np
import pytest
import torch

from opinion_ssl.encoder import (
    MASK, PAD, UNK, EncoderConfig, EncoderHandle, SequenceTooLong, Vocabulary, cooccurrence_embeddings,
)

from conftest import tiny_encoder


def test_vocab_is_order_free():
    a = Vocabulary.build([["b", "a"], ["c"]])
    b = Vocabulary.build([["c"], ["a", "b"]])
    assert a.itos == b.itos and a.hash == b.hash
    assert a.itos[:3] == [PAD, UNK, MASK]
    assert a.ids(["a", "zzz"]) == [3, a.stoi[UNK]]


def test_shape_and_determinism():
    enc = tiny_encoder(dtype=torch.float32).eval()
    out = enc.encode(["the", "food", "was"])
    assert out.shape == (3, enc.hidden_dim)
    assert torch.equal(out, enc.encode(["the", "food", "was"]))


def test_padding_does_not_change_vectors():
    enc = tiny_encoder().eval()
    alone = enc.encode(["the", "food"])
    vecs, mask = enc([["the", "food"], ["the", "food", "was", "good"]])
    assert mask.tolist() == [[True, True, False, False], [True] * 4]
    assert torch.allclose(vecs[0, :2], alone, atol=1e-10)


def test_too_long():
    enc = tiny_encoder(max_len=4)
    with pytest.raises(SequenceTooLong, match="4"):
        enc.encode(["the"] * 5)


def test_full_scale_config():
    assert EncoderConfig.full_scale().hidden_dim == 512
    assert EncoderConfig.full_scale().max_len == 128


def test_finite_differences():
    enc = tiny_encoder(hidden=8)
    enc.train()
    toks = ["the", "food", "good"]
    weights = torch.randn(3, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(0))

    def f():
        return (enc.encode(toks) * weights).sum()

    f().backward()
    rng = np.random.default_rng(0)
    params = [p for p in enc.parameters() if p.grad is not None]
    eps = 1e-6
    for _ in range(30):
        p = params[rng.integers(len(params))]
        idx = tuple(int(rng.integers(d)) for d in p.shape)
        with torch.no_grad():
            old = p[idx].item()
            p[idx] = old + eps
            up = f().item()
            p[idx] = old - eps
            down = f().item()
            p[idx] = old
        num = (up - down) / (2 * eps)
        ana = p.grad[idx].item()
        assert abs(num - ana) <= 1e-4 * max(abs(num), abs(ana)) + 1e-9


def test_cooccurrence_embeddings():
    sents = [["good", "food"], ["great", "food"], ["slow", "staff"], ["rude", "staff"]] * 3
    vocab = Vocabulary.build(sents)
    emb = cooccurrence_embeddings(sents, vocab, 4)
    assert emb.shape == (len(vocab), 4)
    assert np.all(emb[0] == 0)
    i = vocab.stoi
    # words sharing a context end up closer than words that do not
    assert np.linalg.norm(emb[i["good"]] - emb[i["great"]]) < np.linalg.norm(emb[i["good"]] - emb[i["slow"]])
    enc = EncoderHandle(vocab, EncoderConfig(hidden_dim=4, heads=2))
    enc.init_embeddings(emb)
    assert np.allclose(enc.net.tok.weight.detach().numpy(), emb, atol=1e-6)


def _tiny_bert(tmp_path):
    transformers = pytest.importorskip("transformers")
    words = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "the", "food", "good", "##s", "was"]
    (tmp_path / "vocab.txt").write_text("\n".join(words) + "\n")
    tok = transformers.BertTokenizerFast(vocab_file=str(tmp_path / "vocab.txt"), do_lower_case=True)
    tok.save_pretrained(tmp_path)
    cfg = transformers.BertConfig(vocab_size=len(words), hidden_size=8, num_hidden_layers=1,
                                  num_attention_heads=2, intermediate_size=16, max_position_embeddings=32)
    torch.manual_seed(0)
    transformers.BertModel(cfg).save_pretrained(tmp_path)
    return tmp_path


def test_pretrained_variant_first_subtoken(tmp_path):
    path = _tiny_bert(tmp_path)
    enc = EncoderHandle(Vocabulary(), EncoderConfig(variant="pretrained", hidden_dim=8, max_len=16,
                                                    pretrained_path=str(path))).eval()
    toks = ["the", "foods", "was", MASK]
    out = enc.encode(toks)
    assert out.shape == (4, 8)
    # "foods" splits into food + ##s; the first piece is used
    sub = enc.tokenizer(toks, is_split_into_words=True, return_tensors="pt")
    hidden = enc.net(**sub).last_hidden_state[0]
    first = [sub.word_ids(0).index(w) for w in range(4)]
    assert torch.allclose(out, hidden[first], atol=1e-6)
