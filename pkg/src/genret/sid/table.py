"""Assemble, persist and inspect structured identifiers.

An identifier is ``[global] + lexical + [suffix] + [EOS]``; the global token
and suffix are optional so the ablation variants fit the same type.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from ..artifacts import FORMAT_VERSION, ArtifactError, atomic_write_text, config_hash
from ..corpus import Corpus, dump_corpus
from ..embed import EmbeddingMatrix, EmbeddingProvider, embed_texts, get_provider
from ..text import EOS
from .keywords import ClusterKeywords, cluster_tfidf, global_id_tokens
from .kmeans import ClusterModel, kmeans
from .lexical import extract_lexical_id

log = logging.getLogger(__name__)

SID_FORMAT = "genret-sid-table"
SID_MODES = ("full", "no_gsv", "no_sid", "no_global", "no_dedup", "no_constraint")
KMEANS_SEED_OFFSET = 1


@dataclass(frozen=True)
class StructuredIdentifier:
    global_token: str | None
    lexical: tuple[str, ...]
    suffix: str | None = None

    def tokens(self) -> tuple[str, ...]:
        head = () if self.global_token is None else (self.global_token,)
        tail = () if self.suffix is None else (self.suffix,)
        return head + self.lexical + tail + (EOS,)

    def __str__(self) -> str:
        return " ".join(self.tokens())


@dataclass(frozen=True)
class CollisionGroup:
    tokens: tuple[str, ...]
    members: tuple[str, ...]


@dataclass(frozen=True)
class SidParams:
    k: int = 128
    m: int = 4
    M: int = 5
    ngram_max: int = 3
    seed: int = 0
    max_iter: int = 100
    provider: str = "hashing"
    dim: int = 256
    mode: str = "full"

    def __post_init__(self) -> None:
        if self.mode not in SID_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("k", "m", "ngram_max", "max_iter", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.M < 0:
            raise ValueError("M must be nonnegative")


@dataclass
class SidTable:
    sids: dict[str, StructuredIdentifier]
    collisions: list[CollisionGroup]
    params: SidParams
    labels: dict[str, int]
    cluster_globals: list[str]
    banned: list[frozenset[str]]
    config_hash: str = ""
    cluster_model: ClusterModel | None = field(default=None, repr=False, compare=False)
    keywords: ClusterKeywords | None = field(default=None, repr=False, compare=False)

    def token_table(self) -> dict[str, tuple[str, ...]]:
        return {tid: sid.tokens() for tid, sid in self.sids.items()}

    def vocabulary(self) -> set[str]:
        vocab = {EOS}
        for sid in self.sids.values():
            vocab.update(sid.tokens())
        return vocab

    def collision_index(self) -> dict[str, int]:
        return {tid: g for g, grp in enumerate(self.collisions) for tid in grp.members}


def find_collisions(sids: Mapping[str, StructuredIdentifier]) -> list[CollisionGroup]:
    groups: dict[tuple[str, ...], list[str]] = {}
    for tid, sid in sids.items():
        groups.setdefault(sid.tokens(), []).append(tid)
    return [
        CollisionGroup(tokens, tuple(sorted(members)))
        for tokens, members in sorted(groups.items())
        if len(members) > 1
    ]


def _serial_tokens(index: int, m: int) -> tuple[str, ...]:
    digits = str(index).zfill(m)
    head, rest = digits[: len(digits) - m + 1], digits[len(digits) - m + 1:]
    return tuple(f"#{d}" for d in (head, *rest))


def assemble_sids(
    corpus: Corpus,
    cluster_model: ClusterModel,
    keywords: ClusterKeywords,
    params: SidParams,
    provider: EmbeddingProvider,
) -> tuple[dict[str, StructuredIdentifier], list[CollisionGroup]]:
    globals_ = global_id_tokens(keywords)
    sids: dict[str, StructuredIdentifier] = {}
    for i, target in enumerate(corpus):
        cluster = int(cluster_model.labels[i])
        if params.mode == "no_sid":
            lexical = _serial_tokens(i, params.m)
        else:
            banned = frozenset() if params.mode == "no_dedup" else keywords.banned[cluster]
            lexical = tuple(extract_lexical_id(target.descriptor, provider, banned, params.ngram_max, params.m))
        global_token = None if params.mode == "no_global" else globals_[cluster]
        sids[target.target_id] = StructuredIdentifier(global_token, lexical)

    collisions = find_collisions(sids)
    if params.mode == "no_gsv" and collisions:
        # numeric suffixes in target_id order stand in for verification
        for group in collisions:
            for n, tid in enumerate(group.members):
                sids[tid] = replace(sids[tid], suffix=f"<{n}>")
        collisions = find_collisions(sids)
    return sids, collisions


def sid_config_hash(corpus: Corpus, params: SidParams, embeddings: EmbeddingMatrix | None = None) -> str:
    corpus_digest = hashlib.sha256(dump_corpus(corpus).encode("utf-8")).hexdigest()
    emb_digest = None
    if embeddings is not None:
        emb_digest = hashlib.sha256(np.ascontiguousarray(embeddings.rows).tobytes()).hexdigest()
    return config_hash({"corpus": corpus_digest, "params": asdict(params), "embeddings": emb_digest})


def build_sid_table(
    corpus: Corpus,
    params: SidParams = SidParams(),
    provider: EmbeddingProvider | None = None,
    embeddings: EmbeddingMatrix | None = None,
) -> SidTable:
    """Cluster, keyword and assemble identifiers for every target.

    ``embeddings`` (one row per target) replaces the provider's descriptor
    embeddings for clustering only; lexical extraction always uses the
    provider. ``k`` is clamped to the corpus size.
    """
    if provider is None:
        provider = get_provider(params.provider, params.dim)
    supplied = embeddings
    if embeddings is None:
        embeddings = embed_texts(provider, corpus.descriptors)
    elif len(embeddings) != len(corpus):
        raise ValueError(f"{len(embeddings)} embedding rows for {len(corpus)} targets")

    k = min(params.k, len(corpus))
    if k != params.k:
        log.warning("k=%d exceeds corpus size %d; using k=%d", params.k, len(corpus), k)
    model = kmeans(embeddings, k, params.max_iter, params.seed + KMEANS_SEED_OFFSET)
    keywords = cluster_tfidf(corpus.descriptors, model.labels, k, params.M)
    sids, collisions = assemble_sids(corpus, model, keywords, params, provider)
    return SidTable(
        sids=sids,
        collisions=collisions,
        params=params,
        labels={t.target_id: int(model.labels[i]) for i, t in enumerate(corpus)},
        cluster_globals=global_id_tokens(keywords),
        banned=list(keywords.banned),
        config_hash=sid_config_hash(corpus, params, supplied),
        cluster_model=model,
        keywords=keywords,
    )


def dump_sid_table(table: SidTable) -> str:
    header = {
        "format": SID_FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": table.config_hash,
        "params": asdict(table.params),
        "clusters": [
            {"global": g, "banned": sorted(b)} for g, b in zip(table.cluster_globals, table.banned)
        ],
    }
    lines = [json.dumps(header, ensure_ascii=False, sort_keys=True)]
    groups = table.collision_index()
    for tid, sid in table.sids.items():
        row = {
            "target_id": tid,
            "cluster": table.labels[tid],
            "global": sid.global_token,
            "lexical": list(sid.lexical),
            "suffix": sid.suffix,
            "collisions_group": groups.get(tid),
        }
        lines.append(json.dumps(row, ensure_ascii=False))
    return "\n".join(lines) + "\n"


def save_sid_table(table: SidTable, path: str | Path) -> None:
    atomic_write_text(path, dump_sid_table(table))


def load_sid_table(path: str | Path) -> SidTable:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ArtifactError(f"{path}: empty SID table")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: invalid JSON ({exc.msg})") from None
    if header.get("format") != SID_FORMAT:
        raise ArtifactError(f"{path}: not a SID table")
    if header.get("version") != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported version {header.get('version')}")
    sids = {
        r["target_id"]: StructuredIdentifier(r["global"], tuple(r["lexical"]), r.get("suffix"))
        for r in rows
    }
    clusters = header["clusters"]
    return SidTable(
        sids=sids,
        collisions=find_collisions(sids),
        params=SidParams(**header["params"]),
        labels={r["target_id"]: r["cluster"] for r in rows},
        cluster_globals=[c["global"] for c in clusters],
        banned=[frozenset(c["banned"]) for c in clusters],
        config_hash=header["config_hash"],
    )


def describe_sid(table: SidTable, target_id: str) -> str:
    sid = table.sids[target_id]
    cluster = table.labels[target_id]
    lines = [
        f"target   {target_id}",
        f"sid      {sid}",
        f"cluster  {cluster} (global {table.cluster_globals[cluster]!r})",
        f"banned   {', '.join(sorted(table.banned[cluster])) or '-'}",
    ]
    groups = [g for g in table.collisions if target_id in g.members]
    if groups:
        lines.append(f"collides {', '.join(m for m in groups[0].members if m != target_id)}")
    return "\n".join(lines)
