"""Cluster-level TF-IDF keywording and global-token selection.

Each cluster's descriptors are concatenated and treated as one document::

    W[x, c] = tf[x, c] * log(1 + A / f[x])

``tf`` is the raw count of ``x`` in cluster ``c``, ``f[x]`` the number of
clusters containing ``x``, and ``A`` the mean token count per cluster
(natural log). Stop words take part in the counts but never appear in the
ranked keyword lists.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..text import STOP_WORDS, tokenize


@dataclass(frozen=True)
class ClusterKeywords:
    # per cluster: (word, weight) sorted by weight desc, then word
    ranked: tuple[tuple[tuple[str, float], ...], ...]
    banned: tuple[frozenset[str], ...]
    M: int

    @property
    def k(self) -> int:
        return len(self.ranked)

    def weight(self, cluster: int, word: str) -> float:
        for w, weight in self.ranked[cluster]:
            if w == word:
                return weight
        return 0.0


def tfidf_weights(cluster_tokens: Sequence[Sequence[str]]) -> list[dict[str, float]]:
    """Weights for every word of every cluster (stop words included)."""
    k = len(cluster_tokens)
    if k == 0:
        return []
    counts = [Counter(toks) for toks in cluster_tokens]
    avg_words = sum(len(toks) for toks in cluster_tokens) / k
    df: Counter[str] = Counter()
    for c in counts:
        df.update(c.keys())
    return [
        {word: tf * math.log(1.0 + avg_words / df[word]) for word, tf in c.items()}
        for c in counts
    ]


def cluster_tfidf(
    descriptors: Sequence[str],
    labels: Sequence[int],
    k: int | None = None,
    M: int = 5,
    stop_words: Iterable[str] = STOP_WORDS,
) -> ClusterKeywords:
    if len(descriptors) != len(labels):
        raise ValueError("labels must cover every target")
    if k is None:
        k = max(labels) + 1 if len(labels) else 0
    cluster_tokens: list[list[str]] = [[] for _ in range(k)]
    for desc, label in zip(descriptors, labels):
        cluster_tokens[int(label)].extend(tokenize(desc))
    stop = frozenset(stop_words)
    ranked = []
    for weights in tfidf_weights(cluster_tokens):
        items = sorted(
            ((w, v) for w, v in weights.items() if w not in stop),
            key=lambda wv: (-wv[1], wv[0]),
        )
        ranked.append(tuple(items))
    banned = tuple(frozenset(w for w, _ in r[:M]) for r in ranked)
    return ClusterKeywords(tuple(ranked), banned, M)


def global_id_tokens(keywords: ClusterKeywords) -> list[str]:
    """One distinct word per cluster, assigned greedily in cluster order.

    A cluster takes its best-ranked word not already claimed by a
    lower-indexed cluster, or the synthetic ``c<index>`` when none is left.
    """
    taken: set[str] = set()
    out: list[str] = []
    for index, ranked in enumerate(keywords.ranked):
        token = next((w for w, _ in ranked if w not in taken), None)
        if token is None:
            token = f"c{index}"
            while token in taken:
                token += "_"
        taken.add(token)
        out.append(token)
    return out


def global_id_token(cluster_index: int, keywords: ClusterKeywords) -> str:
    return global_id_tokens(keywords)[cluster_index]
