from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Corpus, Query
from .decode import RankedResult
from .gsv import DEFAULT_GSV_K, Verifier, retrieve
from .lm import CondTokenModel
from .sid.table import SidTable
from .trie import IdTrie, build_trie


def training_pairs(queries: Sequence[Query], table: SidTable) -> list[tuple[str, tuple[str, ...]]]:
    """One (query text, identifier tokens) pair per ground-truth target."""
    return [(q.text, table.sids[tid].tokens()) for q in queries for tid in q.gt_targets]


@dataclass
class Retriever:
    corpus: Corpus
    table: SidTable
    model: CondTokenModel
    verifier: Verifier | None = None
    beam_size: int = 50
    gsv_k: int = DEFAULT_GSV_K
    gsv: str = "topk"
    constrained: bool = True
    trie: IdTrie = field(init=False)

    def __post_init__(self) -> None:
        self.trie = build_trie(self.table.sids)
        self._descriptors = {t.target_id: t.descriptor for t in self.corpus}

    def retrieve(self, query: str) -> RankedResult:
        return retrieve(
            query,
            self.model,
            self.trie,
            self.table.sids,
            self._descriptors,
            verifier=self.verifier,
            beam_size=self.beam_size,
            k=self.gsv_k,
            gsv=self.gsv,
            constrained=self.constrained,
        )
