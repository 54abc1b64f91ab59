"""Generative retrieval with structured natural-language identifiers."""

from .corpus import Corpus, Direction, Query, Target, load_corpus, load_queries
from .decode import RankedResult, brute_force_rank, constrained_beam_search, relevance, unconstrained_beam_search
from .embed import HashingEmbedder, cosine, embed_texts
from .evaluation import BenchmarkConfig, MetricReport, recall_at_k, run_benchmark, sweep
from .gsv import build_prompt, retrieve, verify
from .lm import MemorizingModel, UniformModel, nll, train
from .pipeline import Retriever
from .sid import SidParams, SidTable, StructuredIdentifier, build_sid_table
from .trie import IdTrie, build_trie

__version__ = "0.1.0"

__all__ = [
    "BenchmarkConfig",
    "Corpus",
    "Direction",
    "HashingEmbedder",
    "IdTrie",
    "MemorizingModel",
    "MetricReport",
    "Query",
    "RankedResult",
    "Retriever",
    "SidParams",
    "SidTable",
    "StructuredIdentifier",
    "Target",
    "UniformModel",
    "brute_force_rank",
    "build_prompt",
    "build_sid_table",
    "build_trie",
    "constrained_beam_search",
    "cosine",
    "embed_texts",
    "load_corpus",
    "load_queries",
    "nll",
    "recall_at_k",
    "relevance",
    "retrieve",
    "run_benchmark",
    "sweep",
    "train",
    "unconstrained_beam_search",
    "verify",
]
