"""Conditional identifier-token models.

Any object with a ``vocabulary`` and ``next_token_logprobs(query, prefix,
candidates=None)`` can drive decoding. :class:`MemorizingModel` is the
reference implementation: Laplace-smoothed counts of next tokens keyed by
(query, prefix), with unseen queries backing off to the most similar
training query.
"""

from __future__ import annotations

import json
import math
import struct
from collections import defaultdict
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .artifacts import FORMAT_VERSION, ArtifactError, atomic_write_bytes, canonical_json
from .embed import TIE_DECIMALS, EmbeddingProvider, embed_texts, get_provider
from .text import EOS, nfc

DEFAULT_EPS = 0.01
MODEL_MAGIC = b"GRLM\x00\x00\x00\x01"
_HEADER = struct.Struct("<8sIQ")

Prefix = tuple[str, ...]


class EmptyTrainingError(ValueError):
    pass


@runtime_checkable
class CondTokenModel(Protocol):
    vocabulary: tuple[str, ...]

    def next_token_logprobs(
        self, query: str, prefix: Sequence[str], candidates: Sequence[str] | None = None
    ) -> dict[str, float]:
        """Log-probabilities of the next token, restricted to ``candidates``
        when given (values still come from the full distribution)."""
        ...


def sequence_logprob(model: CondTokenModel, query: str, tokens: Sequence[str]) -> float:
    total = 0.0
    for i, tok in enumerate(tokens):
        total += model.next_token_logprobs(query, tokens[:i], (tok,))[tok]
    return total


def nll(model: CondTokenModel, pairs: Sequence[tuple[str, Sequence[str]]]) -> float:
    """Mean over pairs of the summed token negative log-likelihood."""
    if not pairs:
        raise ValueError("nll needs at least one pair")
    return sum(-sequence_logprob(model, q, tuple(seq)) for q, seq in pairs) / len(pairs)


class UniformModel:
    def __init__(self, vocabulary: Sequence[str]):
        self.vocabulary = tuple(sorted(set(vocabulary)))
        self._lp = -math.log(len(self.vocabulary))

    def next_token_logprobs(self, query, prefix, candidates=None):
        toks = self.vocabulary if candidates is None else candidates
        return {t: self._lp for t in toks}

    def sparse_logprobs(self, query: str, prefix: Sequence[str]) -> tuple[dict[str, float], float]:
        return {}, self._lp


class MemorizingModel:
    """Smoothed count model: ``P(tok | key, prefix) = (c + eps) / (n + eps |V|)``.

    The key is the NFC query text when it was seen in training; otherwise
    the training query with the highest embedding cosine (ties go to the
    lexicographically smallest key), unless ``backoff`` is off. A
    (key, prefix) with no counts is uniform.
    """

    def __init__(
        self,
        counts: Mapping[str, Mapping[Prefix, Mapping[str, int]]],
        vocabulary: Sequence[str],
        eps: float = DEFAULT_EPS,
        provider: EmbeddingProvider | None = None,
        backoff: bool = True,
        config_hash: str = "",
    ):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.counts = {k: {p: dict(c) for p, c in v.items()} for k, v in counts.items()}
        self.vocabulary = tuple(sorted(set(vocabulary) | {EOS}))
        self.eps = float(eps)
        self.backoff = backoff
        self.provider = provider if provider is not None else get_provider("hashing")
        self.config_hash = config_hash
        self._totals = {
            k: {p: sum(c.values()) for p, c in v.items()} for k, v in self.counts.items()
        }
        self._keys = sorted(self.counts)
        self._key_rows = embed_texts(self.provider, self._keys).rows if self._keys else None
        self._resolved: dict[str, str | None] = {}
        self._uniform_lp = -math.log(len(self.vocabulary))

    def resolve_key(self, query: str) -> str | None:
        query = nfc(query)
        if query in self.counts:
            return query
        if not self.backoff or self._key_rows is None:
            return None
        if query not in self._resolved:
            q = embed_texts(self.provider, [query]).rows[0]
            sims = np.round(self._key_rows @ q, TIE_DECIMALS)
            self._resolved[query] = self._keys[int(np.argmax(sims))]
        return self._resolved[query]

    def sparse_logprobs(self, query: str, prefix: Sequence[str]) -> tuple[dict[str, float], float]:
        """Explicit log-probs for observed tokens plus the shared value of
        every other vocabulary token."""
        key = self.resolve_key(query)
        prefix = tuple(prefix)
        table = self.counts.get(key, {}).get(prefix) if key is not None else None
        if not table:
            return {}, self._uniform_lp
        log_norm = math.log(self._totals[key][prefix] + self.eps * len(self.vocabulary))
        explicit = {tok: math.log(c + self.eps) - log_norm for tok, c in table.items()}
        return explicit, math.log(self.eps) - log_norm

    def next_token_logprobs(self, query, prefix, candidates=None):
        explicit, default = self.sparse_logprobs(query, prefix)
        toks = self.vocabulary if candidates is None else candidates
        return {t: explicit.get(t, default) for t in toks}

    def score_batch(self, requests: Sequence[tuple[str, Sequence[str]]]) -> np.ndarray:
        """Dense ``(len(requests), |V|)`` log-prob rows in vocabulary order."""
        out = np.empty((len(requests), len(self.vocabulary)))
        for i, (query, prefix) in enumerate(requests):
            lps = self.next_token_logprobs(query, prefix)
            out[i] = [lps[t] for t in self.vocabulary]
        return out


def train(
    pairs: Sequence[tuple[str, Sequence[str]]],
    eps: float = DEFAULT_EPS,
    provider: EmbeddingProvider | None = None,
    vocabulary: Sequence[str] | None = None,
    backoff: bool = True,
    config_hash: str = "",
) -> MemorizingModel:
    """Count next-token occurrences for every prefix of every pair.

    Counting is the maximum-likelihood fit of the summed token NLL for this
    model class; ``eps`` then smooths over the whole vocabulary.
    """
    if not pairs:
        raise EmptyTrainingError("no training pairs")
    if eps <= 0:
        raise ValueError("eps must be positive")
    counts: dict[str, dict[Prefix, dict[str, int]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(int)))
    vocab = set(vocabulary or ())
    for query, seq in pairs:
        seq = tuple(seq)
        if not seq or seq[-1] != EOS:
            raise ValueError(f"training sequence must end with {EOS}: {list(seq)}")
        key = nfc(query)
        vocab.update(seq)
        for i, tok in enumerate(seq):
            counts[key][seq[:i]][tok] += 1
    return MemorizingModel(counts, vocab, eps, provider, backoff, config_hash)


class ScorerAdapter:
    """Wraps a batched external scorer as a :class:`CondTokenModel`.

    ``scorer`` receives a list of (query, prefix) requests and returns one
    row of log-probabilities per request, aligned with ``vocabulary``.
    """

    def __init__(
        self,
        scorer: Callable[[Sequence[tuple[str, Prefix]]], Sequence[Sequence[float]]],
        vocabulary: Sequence[str],
        tol: float = 1e-6,
    ):
        self.scorer = scorer
        self.vocabulary = tuple(vocabulary)
        self._index = {t: i for i, t in enumerate(self.vocabulary)}
        self.tol = tol

    def next_token_logprobs(self, query, prefix, candidates=None):
        row = np.asarray(self.scorer([(query, tuple(prefix))])[0], dtype=np.float64)
        if row.shape != (len(self.vocabulary),):
            raise ValueError(f"scorer returned {row.shape[0]} values for |V|={len(self.vocabulary)}")
        if abs(float(np.exp(row).sum()) - 1.0) > self.tol:
            raise ValueError("scorer row is not a normalized distribution")
        toks = self.vocabulary if candidates is None else candidates
        return {t: float(row[self._index[t]]) for t in toks}


def dump_model(model: MemorizingModel) -> bytes:
    payload = {
        "config_hash": model.config_hash,
        "provider": model.provider.name,
        "dim": model.provider.dim,
        "eps": model.eps,
        "backoff": model.backoff,
        "vocabulary": list(model.vocabulary),
        "counts": [
            [key, [[list(p), model.counts[key][p]] for p in sorted(model.counts[key])]]
            for key in sorted(model.counts)
        ],
    }
    body = canonical_json(payload).encode("utf-8")
    return _HEADER.pack(MODEL_MAGIC, FORMAT_VERSION, len(body)) + body


def save_model(model: MemorizingModel, path: str | Path) -> None:
    atomic_write_bytes(path, dump_model(model))


def load_model(path: str | Path) -> MemorizingModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ArtifactError(f"{path}: truncated model file")
    magic, version, length = _HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ArtifactError(f"{path}: not a model file")
    if version != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported model version {version}")
    body = data[_HEADER.size:]
    if len(body) != length:
        raise ArtifactError(f"{path}: payload length mismatch")
    payload = json.loads(body.decode("utf-8"))
    provider_name = payload["provider"].split("-")[0]
    counts = {key: {tuple(p): c for p, c in rows} for key, rows in payload["counts"]}
    return MemorizingModel(
        counts,
        payload["vocabulary"],
        payload["eps"],
        get_provider(provider_name, payload["dim"]),
        payload["backoff"],
        payload["config_hash"],
    )
