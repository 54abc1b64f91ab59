"""Text embedding providers.

The built-in :class:`HashingEmbedder` is a deterministic stand-in for a
neural sentence encoder: word unigrams and bigrams are hashed into ``dim``
signed buckets. Real encoder output can be brought in through
:func:`load_embeddings` (one row per corpus target).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .artifacts import atomic_write_bytes
from .text import tokenize

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
HASH_SEED = 0x5EED
_MASK64 = (1 << 64) - 1

EMB_MAGIC = b"GREMB\x00\x00\x01"
_HEADER = struct.Struct("<8sQQ")

_EMPTY_FEATURE = "\x00empty"

# similarity scores are compared at this precision when breaking ties
TIE_DECIMALS = 12


class EmbeddingError(ValueError):
    pass


class EmptyInputError(EmbeddingError):
    pass


class ZeroVectorError(EmbeddingError):
    pass


class DimMismatchError(EmbeddingError):
    pass


class ShapeMismatchError(EmbeddingError):
    pass


class CorruptFileError(EmbeddingError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    rows: np.ndarray
    normalized: bool

    def __post_init__(self) -> None:
        if self.rows.ndim != 2 or self.rows.shape[1] < 1:
            raise ShapeMismatchError(f"expected a 2-D matrix, got shape {self.rows.shape}")

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return int(self.rows.shape[0])


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str
    dim: int
    deterministic: bool

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an unnormalized ``(len(texts), dim)`` float64 array."""
        ...


def fnv1a64(data: bytes, seed: int = HASH_SEED) -> int:
    """64-bit FNV-1a with the seed folded into the offset basis."""
    h = FNV64_OFFSET ^ seed
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def text_features(text: str) -> list[str]:
    words = tokenize(text)
    return words + [f"{a} {b}" for a, b in zip(words, words[1:])]


class HashingEmbedder:
    """Signed feature hashing over word unigrams and bigrams.

    Bucket is ``(h >> 1) % dim``; the lowest hash bit picks the sign
    (0 -> +1, 1 -> -1). A text with no features, or whose features cancel
    out exactly, embeds to the bucket of a reserved "empty" feature so that
    normalization is always defined.
    """

    deterministic = True

    def __init__(self, dim: int = 256, seed: int = HASH_SEED):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.name = f"hashing-{dim}" if seed == HASH_SEED else f"hashing-{dim}-{seed:x}"
        self._bucket = lru_cache(maxsize=1 << 16)(self._bucket_uncached)

    def _bucket_uncached(self, feature: str) -> tuple[int, float]:
        h = fnv1a64(feature.encode("utf-8"), self.seed)
        return (h >> 1) % self.dim, (-1.0 if h & 1 else 1.0)

    def bucket(self, feature: str) -> tuple[int, float]:
        return self._bucket(feature)

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for feat in text_features(text):
            idx, sign = self._bucket(feat)
            vec[idx] += sign
        if not vec.any():
            idx, sign = self._bucket(_EMPTY_FEATURE)
            vec[idx] = sign
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            out[i] = self.embed_one(text)
        return out


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms[:, 0] == 0)[0])
        raise ZeroVectorError(f"row {bad} has zero norm")
    return rows / norms


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> EmbeddingMatrix:
    if len(texts) == 0:
        raise EmptyInputError("no texts to embed")
    rows = np.asarray(provider.embed(list(texts)), dtype=np.float64)
    if rows.shape != (len(texts), provider.dim):
        raise ShapeMismatchError(f"provider {provider.name} returned shape {rows.shape}")
    return EmbeddingMatrix(_normalize_rows(rows), normalized=True)


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimMismatchError(f"dims differ: {u.shape} vs {v.shape}")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine of a zero vector is undefined")
    return max(-1.0, min(1.0, float(np.dot(u, v)) / (nu * nv)))


def save_embeddings(matrix: EmbeddingMatrix | np.ndarray, path: str | Path) -> None:
    rows = matrix.rows if isinstance(matrix, EmbeddingMatrix) else np.asarray(matrix)
    if rows.ndim != 2:
        raise ShapeMismatchError("embeddings must be 2-D")
    n, d = rows.shape
    payload = _HEADER.pack(EMB_MAGIC, n, d) + np.ascontiguousarray(rows, dtype="<f4").tobytes()
    atomic_write_bytes(path, payload)


def load_embeddings(path: str | Path, expected_rows: int | None = None, normalize: bool = True) -> EmbeddingMatrix:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CorruptFileError(f"{path}: truncated header")
    magic, n, d = _HEADER.unpack_from(data)
    if magic != EMB_MAGIC:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if d == 0:
        raise CorruptFileError(f"{path}: zero dimension")
    body = data[_HEADER.size:]
    if len(body) != n * d * 4:
        raise CorruptFileError(f"{path}: expected {n * d * 4} payload bytes, found {len(body)}")
    if expected_rows is not None and n != expected_rows:
        raise ShapeMismatchError(f"{path}: {n} rows, expected {expected_rows}")
    rows = np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)
    if normalize:
        return EmbeddingMatrix(_normalize_rows(rows), normalized=True)
    return EmbeddingMatrix(rows, normalized=False)


PROVIDERS = {"hashing": HashingEmbedder}


def get_provider(name: str, dim: int = 256) -> EmbeddingProvider:
    try:
        cls = PROVIDERS[name]
    except KeyError:
        raise ValueError(f"unknown embedding provider {name!r}; known: {sorted(PROVIDERS)}") from None
    return cls(dim=dim)
