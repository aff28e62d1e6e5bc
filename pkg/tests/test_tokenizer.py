import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlogformer.tokenizer import (MASK, PAD, SPECIAL_TOKENS, SUM, UNK, EmptyCorpus, Vocab, build_vocab,
                                  decode, encode, normalize, tokenize)


def test_vocab_order_frequency_then_lexicographic():
    v = build_vocab(["a : 1", "a : 2"])
    assert v.id_to_token[:4] == SPECIAL_TOKENS
    assert [v.token_to_id[t] for t in (":", "a", "1", "2")] == [4, 5, 6, 7]
    assert encode(v, "a : 1") == [5, 4, 6]


def test_min_freq_drops_rare_tokens():
    v = build_vocab(["x"], min_freq=2)
    assert len(v) == 4
    assert encode(v, "x") == [UNK]


def test_unknown_and_special_rendering():
    v = build_vocab(["a : 1"])
    assert encode(v, "zzz") == [UNK]
    assert decode(v, [MASK]) == "⟨MASK⟩"


def test_deterministic_build():
    corpus = ["b c", "c d e", "e e"]
    assert build_vocab(corpus) == build_vocab(corpus)


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocab([])


def test_decode_rejects_out_of_range():
    v = build_vocab(["a"])
    with pytest.raises(ValueError):
        decode(v, [len(v)])


def test_specials_cannot_be_forged():
    v = build_vocab(["⟨MASK⟩ ⟨SUM⟩ [MASK]"])
    ids = encode(v, "⟨MASK⟩ ⟨SUM⟩ ⟨PAD⟩ [MASK]")
    assert not {PAD, MASK, SUM} & set(ids)


def test_tokenize_splits_punctuation():
    assert tokenize("Hello, World-42!") == ["hello", ",", "world", "-", "42", "!"]


def test_save_load_roundtrip(tmp_path):
    v = build_vocab(["a : 1", "b : 2 2"])
    v.save(tmp_path / "vocab.txt")
    lines = (tmp_path / "vocab.txt").read_text(encoding="utf-8").splitlines()
    assert lines[:4] == list(SPECIAL_TOKENS)
    assert Vocab.load(tmp_path / "vocab.txt") == v


@given(st.lists(st.text(min_size=1, max_size=20), min_size=1, max_size=5))
def test_roundtrip_without_unknowns(texts):
    v = build_vocab(texts)
    for t in texts:
        ids = encode(v, t)
        if UNK not in ids:
            assert decode(v, ids) == normalize(t)
