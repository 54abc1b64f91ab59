"""Trie-constrained beam search and exhaustive ranking.

Scores are cumulative natural-log probabilities. Ties are broken by the
token sequence (lexicographic), and targets sharing a sequence are listed
in target_id order, so beam search and :func:`brute_force_rank` agree
exactly whenever the beam is wide enough to hold every identifier.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .lm import CondTokenModel, sequence_logprob
from .sid.table import StructuredIdentifier
from .text import EOS
from .trie import EmptyTrieError, IdTrie, TrieNode

BRUTE_FORCE_LIMIT = 4096

Hypothesis = tuple[tuple[str, ...], float]


class TooLargeError(ValueError):
    pass


class ConstraintViolation(AssertionError):
    pass


@dataclass(frozen=True)
class RankedEntry:
    target_id: str
    score: float
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class RankedResult:
    entries: tuple[RankedEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def target_ids(self) -> list[str]:
        return [e.target_id for e in self.entries]

    def pairs(self) -> list[tuple[str, float]]:
        return [(e.target_id, e.score) for e in self.entries]

    def rank_of(self, target_ids: Iterable[str]) -> int | None:
        """1-based rank of the first entry in ``target_ids``, or None."""
        wanted = set(target_ids)
        for rank, e in enumerate(self.entries, start=1):
            if e.target_id in wanted:
                return rank
        return None


def _top(pool: list[tuple[float, tuple[str, ...], object]], beam_size: int):
    return heapq.nsmallest(beam_size, pool, key=lambda h: (-h[0], h[1]))


def constrained_beam_search(
    model: CondTokenModel,
    trie: IdTrie,
    query: str,
    beam_size: int,
) -> list[Hypothesis]:
    """Beam search where every step only extends along trie edges.

    Finished hypotheses (ending in EOS) stay in the pool and compete with
    live ones for the ``beam_size`` slots; search stops once no live
    hypothesis survives selection.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be at least 1")
    if not trie.root.children:
        raise EmptyTrieError("trie has no identifiers")

    live: list[tuple[float, tuple[str, ...], TrieNode]] = [(0.0, (), trie.root)]
    finished: list[tuple[float, tuple[str, ...], TrieNode]] = []
    while live:
        pool = list(finished)
        for score, prefix, node in live:
            tokens = sorted(node.children)
            if not tokens:
                continue
            lps = model.next_token_logprobs(query, prefix, tokens)
            for tok in tokens:
                pool.append((score + lps[tok], prefix + (tok,), node.children[tok]))
        selected = _top(pool, beam_size)
        finished = [h for h in selected if h[1][-1] == EOS]
        live = [h for h in selected if h[1][-1] != EOS]

    for _, seq, node in finished:
        if not node.targets or not trie.contains_path(seq):
            raise ConstraintViolation(f"decoded sequence is not an identifier: {list(seq)}")
    return [(seq, score) for score, seq, _ in finished]


def unconstrained_beam_search(
    model: CondTokenModel,
    query: str,
    beam_size: int,
    max_len: int,
    vocabulary: Sequence[str] | None = None,
) -> list[Hypothesis]:
    """The same search over the whole vocabulary.

    Hypotheses end at EOS or after ``max_len`` tokens; the output may
    contain sequences that are not identifiers. Models exposing
    ``sparse_logprobs`` are expanded without enumerating the vocabulary:
    among tokens sharing the default log-prob only the ``beam_size``
    lexicographically smallest can survive selection.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be at least 1")
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    vocab = sorted(vocabulary if vocabulary is not None else model.vocabulary)
    sparse = getattr(model, "sparse_logprobs", None) if vocabulary is None else None

    live: list[tuple[float, tuple[str, ...], None]] = [(0.0, (), None)]
    finished: list[tuple[float, tuple[str, ...], None]] = []
    while live:
        pool = list(finished)
        for score, prefix, _ in live:
            if sparse is not None:
                explicit, default = sparse(query, prefix)
                expansions = dict(explicit)
                extra = 0
                for tok in vocab:
                    if extra >= beam_size:
                        break
                    if tok not in expansions:
                        expansions[tok] = default
                        extra += 1
            else:
                expansions = model.next_token_logprobs(query, prefix, vocab)
            for tok, lp in expansions.items():
                pool.append((score + lp, prefix + (tok,), None))
        selected = _top(pool, beam_size)
        finished = [h for h in selected if h[1][-1] == EOS or len(h[1]) >= max_len]
        live = [h for h in selected if h[1][-1] != EOS and len(h[1]) < max_len]
    return [(seq, score) for score, seq, _ in finished]


def expand_hypotheses(trie: IdTrie, hyps: Sequence[Hypothesis]) -> RankedResult:
    """Map sequences to targets; a collision contributes one entry per
    target in target_id order, unknown sequences contribute nothing."""
    entries = []
    seen: set[str] = set()
    for seq, score in hyps:
        for tid in sorted(trie.lookup(seq)):
            if tid not in seen:
                seen.add(tid)
                entries.append(RankedEntry(tid, score, seq))
    return RankedResult(tuple(entries))


def relevance(model: CondTokenModel, query: str, tokens: Sequence[str]) -> float:
    """Product of next-token probabilities of a complete identifier."""
    if not tokens or tokens[-1] != EOS:
        raise ValueError("relevance needs a complete identifier ending in EOS")
    return math.exp(sequence_logprob(model, query, tuple(tokens)))


def brute_force_rank(
    model: CondTokenModel,
    sids: Mapping[str, StructuredIdentifier | Sequence[str]],
    query: str,
) -> RankedResult:
    """Score every identifier exactly and sort; the oracle for beam search."""
    if len(sids) > BRUTE_FORCE_LIMIT:
        raise TooLargeError(f"{len(sids)} identifiers exceed the brute-force limit {BRUTE_FORCE_LIMIT}")
    cache: dict[tuple[str, ...], float] = {}
    rows = []
    for tid, sid in sids.items():
        tokens = sid.tokens() if isinstance(sid, StructuredIdentifier) else tuple(sid)
        if tokens not in cache:
            cache[tokens] = sequence_logprob(model, query, tokens)
        rows.append((-cache[tokens], tokens, tid))
    rows.sort()
    return RankedResult(tuple(RankedEntry(tid, -neg, tokens) for neg, tokens, tid in rows))
