import math
import random

import numpy as np
import pytest

from genret.embed import (
    CorruptFileError,
    DimMismatchError,
    EmptyInputError,
    HashingEmbedder,
    ShapeMismatchError,
    ZeroVectorError,
    cosine,
    embed_texts,
    fnv1a64,
    load_embeddings,
    save_embeddings,
    text_features,
)
from genret.text import tokenize


def test_fnv_reference_vector():
    # published FNV-1a 64 vectors use the unseeded offset basis
    assert fnv1a64(b"", seed=0) == 0xCBF29CE484222325
    assert fnv1a64(b"a", seed=0) == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar", seed=0) == 0x85944171F73967E8


def test_tokenize():
    assert tokenize("A brown-dog, RUNS_fast!") == ["a", "brown", "dog", "runs", "fast"]


def test_features_unigrams_and_bigrams():
    assert text_features("big red dog") == ["big", "red", "dog", "big red", "red dog"]


def test_single_text_normalized():
    m = embed_texts(HashingEmbedder(), ["a"])
    assert m.rows.shape == (1, 256)
    assert np.linalg.norm(m.rows[0]) == pytest.approx(1.0, abs=1e-12)
    assert m.normalized


def test_deterministic():
    e = HashingEmbedder()
    m = embed_texts(e, ["same text here", "same text here"])
    assert np.array_equal(m.rows[0], m.rows[1])
    assert np.array_equal(m.rows[0], embed_texts(HashingEmbedder(), ["same text here"]).rows[0])


def test_empty_input():
    with pytest.raises(EmptyInputError):
        embed_texts(HashingEmbedder(), [])


def test_textless_input_still_unit_norm():
    m = embed_texts(HashingEmbedder(), ["!!!", ""])
    np.testing.assert_allclose(np.linalg.norm(m.rows, axis=1), 1.0)


def _bucket_trace(text, dim=256, seed=0x5EED):
    # independent FNV-1a walk, byte by byte
    buckets = set()
    for feat in text_features(text):
        h = 0xCBF29CE484222325 ^ seed
        for b in feat.encode():
            h = ((h ^ b) * 0x100000001B3) % (1 << 64)
        buckets.add((h >> 1) % dim)
    return buckets


@pytest.mark.parametrize(
    "a,b",
    [("red apple", "blue whale"), ("quantum physics lecture", "garden hose"), ("cat", "dog")],
)
def test_disjoint_vocab_cosine(a, b):
    ba, bb = _bucket_trace(a), _bucket_trace(b)
    e = HashingEmbedder()
    c = cosine(e.embed_one(a), e.embed_one(b))
    if ba.isdisjoint(bb):
        assert c == 0.0
    else:
        assert abs(c) <= 1.0


def test_cosine_basic():
    x = np.array([0.3, -1.2, 4.0])
    assert cosine(x, x) == pytest.approx(1.0, abs=1e-15)
    assert cosine((1, 0), (0, 1)) == 0.0


def test_cosine_hand_value():
    # (1,2,2).(2,1,2) = 8; both norms 3
    assert cosine((1, 2, 2), (2, 1, 2)) == pytest.approx(8 / 9, rel=1e-12)


def test_cosine_errors():
    with pytest.raises(ZeroVectorError):
        cosine((0, 0), (1, 0))
    with pytest.raises(DimMismatchError):
        cosine((1, 0), (1, 0, 0))


def test_cosine_symmetric_bounded():
    rng = random.Random(3)
    for _ in range(200):
        u = [rng.uniform(-1, 1) for _ in range(5)]
        v = [rng.uniform(-1, 1) for _ in range(5)]
        assert cosine(u, v) == cosine(v, u)
        assert abs(cosine(u, v)) <= 1 + 1e-9


def test_embedding_file_round_trip(tmp_path):
    rows = np.random.default_rng(0).normal(size=(7, 5))
    p = tmp_path / "e.bin"
    save_embeddings(rows, p)
    raw = load_embeddings(p, 7, normalize=False)
    np.testing.assert_array_equal(raw.rows, rows.astype(np.float32).astype(np.float64))
    norm = load_embeddings(p, 7)
    np.testing.assert_allclose(np.linalg.norm(norm.rows, axis=1), 1.0, atol=1e-6)


def test_embedding_file_header_layout(tmp_path):
    p = tmp_path / "e.bin"
    save_embeddings(np.ones((2, 3)), p)
    data = p.read_bytes()
    assert data[:8] == b"GREMB\x00\x00\x01"
    assert int.from_bytes(data[8:16], "little") == 2
    assert int.from_bytes(data[16:24], "little") == 3
    assert len(data) == 24 + 2 * 3 * 4


def test_embedding_file_errors(tmp_path):
    p = tmp_path / "e.bin"
    save_embeddings(np.ones((2, 3)), p)
    with pytest.raises(ShapeMismatchError):
        load_embeddings(p, 3)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(CorruptFileError):
        load_embeddings(p, 2)
    p.write_bytes(b"XXXXXXXX" + bytes(16))
    with pytest.raises(CorruptFileError):
        load_embeddings(p)
    p.write_bytes(b"\x00")
    with pytest.raises(CorruptFileError):
        load_embeddings(p)
