"""Structured identifier construction: global IDs from k-means clusters,
lexical IDs from keyword extraction, cluster TF-IDF deduplication."""

from .keywords import ClusterKeywords, cluster_tfidf, global_id_token, global_id_tokens, tfidf_weights
from .kmeans import ClusterModel, KMeansError, KTooLargeError, kmeans
from .lexical import candidate_phrases, extract_lexical_id, flatten_phrases, rank_phrases
from .table import (
    SID_MODES,
    CollisionGroup,
    SidParams,
    SidTable,
    StructuredIdentifier,
    assemble_sids,
    build_sid_table,
    describe_sid,
    dump_sid_table,
    find_collisions,
    load_sid_table,
    save_sid_table,
)

__all__ = [
    "SID_MODES",
    "ClusterKeywords",
    "ClusterModel",
    "CollisionGroup",
    "KMeansError",
    "KTooLargeError",
    "SidParams",
    "SidTable",
    "StructuredIdentifier",
    "assemble_sids",
    "build_sid_table",
    "candidate_phrases",
    "cluster_tfidf",
    "describe_sid",
    "dump_sid_table",
    "extract_lexical_id",
    "find_collisions",
    "flatten_phrases",
    "global_id_token",
    "global_id_tokens",
    "kmeans",
    "load_sid_table",
    "rank_phrases",
    "save_sid_table",
    "tfidf_weights",
]
