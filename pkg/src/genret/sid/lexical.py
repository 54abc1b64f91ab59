from __future__ import annotations

from typing import AbstractSet, Sequence

from ..embed import TIE_DECIMALS, EmbeddingProvider, embed_texts
from ..text import PAD, STOP_WORDS, tokenize



def candidate_phrases(
    words: Sequence[str],
    banned: AbstractSet[str] = frozenset(),
    ngram_max: int = 3,
    stop_words: AbstractSet[str] = STOP_WORDS,
) -> list[str]:
    """Contiguous 1..ngram_max grams in first-occurrence order.

    Drops grams made only of stop words and grams containing a banned word.
    """
    seen: dict[str, None] = {}
    for n in range(1, ngram_max + 1):
        for i in range(len(words) - n + 1):
            gram = words[i:i + n]
            if all(w in stop_words for w in gram):
                continue
            if any(w in banned for w in gram):
                continue
            seen.setdefault(" ".join(gram), None)
    return list(seen)


def rank_phrases(descriptor: str, phrases: Sequence[str], provider: EmbeddingProvider) -> list[tuple[str, float]]:
    """Phrases by cosine to the whole descriptor; ties by phrase text.

    Similarities are compared at 12 decimals so that equal cosines reached
    through different float rounding still count as ties.
    """
    if not phrases:
        return []
    doc = embed_texts(provider, [descriptor]).rows[0]
    sims = embed_texts(provider, list(phrases)).rows @ doc
    order = sorted(range(len(phrases)), key=lambda i: (-round(float(sims[i]), TIE_DECIMALS), phrases[i], i))
    return [(phrases[i], float(sims[i])) for i in order]


def flatten_phrases(
    ranked: Sequence[str],
    m: int,
    stop_words: AbstractSet[str] = STOP_WORDS,
) -> list[str]:
    chosen: list[str] = []
    for phrase in ranked:
        if len(chosen) >= m:
            break
        content = [w for w in phrase.split() if w not in stop_words]
        if any(w in chosen for w in content):
            continue
        for w in content:
            if len(chosen) < m and w not in chosen:
                chosen.append(w)
    return chosen + [PAD] * (m - len(chosen))


def extract_lexical_id(
    descriptor: str,
    provider: EmbeddingProvider,
    banned: AbstractSet[str] = frozenset(),
    ngram_max: int = 3,
    m: int = 4,
    stop_words: AbstractSet[str] = STOP_WORDS,
) -> list[str]:
    """Pick ``m`` keyword tokens from ``descriptor``.

    Candidates are ranked by embedding similarity to the full descriptor and
    taken greedily, skipping any candidate that reuses an already chosen
    word. The last phrase is truncated to fit; short results are padded
    with ``"pad"``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    words = tokenize(descriptor)
    phrases = candidate_phrases(words, banned, ngram_max, stop_words)
    ranked = [p for p, _ in rank_phrases(descriptor, phrases, provider)]
    return flatten_phrases(ranked, m, stop_words)
