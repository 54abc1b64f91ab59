"""Verification re-ranking of the top generated candidates.

The top-K targets after collision expansion are rendered into a selection
prompt and re-scored by a :class:`Verifier`. The re-sort is stable, so ties
and failed candidates keep their generation order; ranks beyond K are
never touched.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .corpus import Direction
from .decode import RankedEntry, RankedResult, constrained_beam_search, expand_hypotheses, unconstrained_beam_search
from .embed import EmbeddingProvider, embed_texts, get_provider
from .lm import CondTokenModel
from .sid.table import StructuredIdentifier
from .trie import IdTrie

log = logging.getLogger(__name__)

DEFAULT_GSV_K = 10
GSV_MODES = ("off", "topk", "collisions")
VERIFIER_URL_ENV = "GENRET_VERIFIER_URL"

INSTRUCTIONS = {
    Direction.TO_IMAGE: (
        "Image:",
        "Sentence:",
        "Please select the image that best matches the last sentence based on the image with its keywords.",
    ),
    Direction.TO_TEXT: (
        "Sentence:",
        "Image:",
        "Please select the sentence that best matches the last image based on the sentence with its keywords.",
    ),
}


class VerifierFailure(RuntimeError):
    def __init__(self, message: str, target_id: str | None = None):
        self.target_id = target_id
        super().__init__(message)


@dataclass(frozen=True)
class Candidate:
    target_id: str
    tokens: tuple[str, ...]
    score: float
    descriptor: str
    lexical: tuple[str, ...]

    def render(self) -> str:
        return f"{_clean(self.descriptor)}; {' '.join(self.lexical)}"


def _clean(text: str) -> str:
    # the template supplies the closing period
    return " ".join(text.split()).rstrip(".")


class Verifier(Protocol):
    name: str

    def score(self, query: str, candidates: Sequence[Candidate]) -> list[float | None]:
        """One score per candidate; ``None`` marks a per-candidate failure."""
        ...


def aggregate_candidates(
    ranked: RankedResult,
    k: int,
    descriptors: Mapping[str, str],
    sids: Mapping[str, StructuredIdentifier],
) -> list[Candidate]:
    if k < 1:
        raise ValueError("K must be at least 1")
    return [
        Candidate(e.target_id, e.tokens, e.score, descriptors[e.target_id], sids[e.target_id].lexical)
        for e in ranked.entries[:k]
    ]


def build_prompt(query: str, candidates: Sequence[Candidate], direction: Direction | str = Direction.TO_IMAGE) -> str:
    """Render the selection prompt.

    Layout: a header line, one ``<descriptor>; <lexical tokens>.`` line per
    candidate in rank order, the query line, then the instruction. Every
    line ends with a newline; trailing periods of descriptor and query are
    dropped so each line carries exactly one.
    """
    if not candidates:
        raise ValueError("prompt needs at least one candidate")
    header, query_label, instruction = INSTRUCTIONS[Direction(direction)]
    lines = [header]
    lines += [f"{c.render()}." for c in candidates]
    lines.append(f"{query_label} {_clean(query)}.")
    lines.append(instruction)
    return "\n".join(lines) + "\n"


def verify(verifier: Verifier, query: str, candidates: Sequence[Candidate]) -> list[Candidate]:
    """Stable re-sort by verifier score, highest first.

    Candidates the verifier could not score hold their incoming positions;
    if the verifier fails outright the input order is returned.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("nothing to verify")
    try:
        scores = list(verifier.score(query, candidates))
        if len(scores) != len(candidates):
            raise VerifierFailure(f"{verifier.name} returned {len(scores)} scores for {len(candidates)} candidates")
    except VerifierFailure as exc:
        log.warning("verifier %s failed, keeping generation order: %s", verifier.name, exc)
        return candidates

    slots = [i for i, s in enumerate(scores) if s is not None]
    for i, s in enumerate(scores):
        if s is None:
            log.warning("verifier %s failed on %s; keeping its position", verifier.name, candidates[i].target_id)
    reordered = sorted(slots, key=lambda i: -float(scores[i]))
    out = list(candidates)
    for slot, src in zip(slots, reordered):
        out[slot] = candidates[src]
    return out


class ConstantVerifier:
    name = "constant"

    def __init__(self, value: float = 0.0):
        self.value = value

    def score(self, query, candidates):
        return [self.value] * len(candidates)


class OracleVerifier:
    """Scores 1 for a ground-truth target of the query text, else 0."""

    name = "oracle"

    def __init__(self, relevant: Mapping[str, Sequence[str]]):
        self.relevant = {q: frozenset(ts) for q, ts in relevant.items()}

    @classmethod
    def from_queries(cls, queries) -> OracleVerifier:
        rel: dict[str, set[str]] = {}
        for q in queries:
            rel.setdefault(q.text, set()).update(q.gt_targets)
        return cls(rel)

    def score(self, query, candidates):
        gt = self.relevant.get(query, frozenset())
        return [1.0 if c.target_id in gt else 0.0 for c in candidates]


class EmbeddingVerifier:
    """Cosine between the query and ``descriptor + " " + lexical tokens``."""

    name = "embedding"

    def __init__(self, provider: EmbeddingProvider | None = None):
        self.provider = provider if provider is not None else get_provider("hashing")

    def score(self, query, candidates):
        texts = [f"{c.descriptor} {' '.join(c.lexical)}" for c in candidates]
        rows = embed_texts(self.provider, [query, *texts]).rows
        return [float(v) for v in rows[1:] @ rows[0]]


class HttpVerifier:
    """POSTs ``{"query", "prompt", "candidate_ids"}`` as JSON and expects
    ``{"scores": {target_id: number}}`` or ``{"scores": [number, ...]}``.
    Missing or non-numeric entries count as per-candidate failures."""

    name = "http"

    def __init__(self, url: str | None = None, timeout: float = 10.0, direction: Direction | str = Direction.TO_IMAGE):
        url = url or os.environ.get(VERIFIER_URL_ENV)
        if not url:
            raise ValueError(f"no verifier URL given and {VERIFIER_URL_ENV} is unset")
        self.url = url
        self.timeout = timeout
        self.direction = Direction(direction)

    def score(self, query, candidates):
        body = json.dumps(
            {
                "query": query,
                "prompt": build_prompt(query, candidates, self.direction),
                "candidate_ids": [c.target_id for c in candidates],
            }
        ).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
            raise VerifierFailure(f"request to {self.url} failed: {exc}") from exc
        scores = payload.get("scores") if isinstance(payload, dict) else None
        if isinstance(scores, list):
            if len(scores) != len(candidates):
                raise VerifierFailure("score list length does not match candidates")
            raw = scores
        elif isinstance(scores, dict):
            raw = [scores.get(c.target_id) for c in candidates]
        else:
            raise VerifierFailure("response has no scores")
        return [float(s) if isinstance(s, (int, float)) and not isinstance(s, bool) else None for s in raw]


def make_verifier(name: str, queries=None, provider: EmbeddingProvider | None = None, direction=Direction.TO_IMAGE):
    if name == "none":
        return None
    if name == "oracle":
        if queries is None:
            raise ValueError("the oracle verifier needs the query set")
        return OracleVerifier.from_queries(queries)
    if name == "embedding":
        return EmbeddingVerifier(provider)
    if name == "http":
        return HttpVerifier(direction=direction)
    raise ValueError(f"unknown verifier {name!r}")


def _verify_collisions(verifier: Verifier, query: str, candidates: list[Candidate]) -> list[Candidate]:
    out: list[Candidate] = []
    i = 0
    while i < len(candidates):
        j = i
        while j < len(candidates) and candidates[j].tokens == candidates[i].tokens:
            j += 1
        block = candidates[i:j]
        out.extend(verify(verifier, query, block) if len(block) > 1 else block)
        i = j
    return out


def retrieve(
    query: str,
    model: CondTokenModel,
    trie: IdTrie,
    sids: Mapping[str, StructuredIdentifier],
    descriptors: Mapping[str, str],
    verifier: Verifier | None = None,
    beam_size: int = 50,
    k: int = DEFAULT_GSV_K,
    gsv: str = "topk",
    constrained: bool = True,
    max_len: int | None = None,
) -> RankedResult:
    """Decode, expand collisions, and optionally verify the top ``k``."""
    if gsv not in GSV_MODES:
        raise ValueError(f"unknown GSV mode {gsv!r}")
    if constrained:
        hyps = constrained_beam_search(model, trie, query, beam_size)
    else:
        if max_len is None:
            max_len = max(len(s.tokens()) for s in sids.values())
        hyps = unconstrained_beam_search(model, query, beam_size, max_len)
    ranked = expand_hypotheses(trie, hyps)
    if verifier is None or gsv == "off" or not ranked.entries:
        return ranked

    candidates = aggregate_candidates(ranked, k, descriptors, sids)
    if gsv == "topk":
        verified = verify(verifier, query, candidates)
    else:
        verified = _verify_collisions(verifier, query, candidates)
    head = tuple(RankedEntry(c.target_id, c.score, c.tokens) for c in verified)
    return RankedResult(head + ranked.entries[len(candidates):])

