"""Recall metrics, the ablation benchmark runner and parameter sweeps."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .artifacts import FORMAT_VERSION, config_hash
from .corpus import Corpus, Query
from .decode import RankedResult
from .embed import EmbeddingMatrix, get_provider
from .gsv import DEFAULT_GSV_K, GSV_MODES, make_verifier
from .lm import DEFAULT_EPS, train
from .pipeline import Retriever, training_pairs
from .sid.table import SID_MODES, SidParams, SidTable, build_sid_table

BENCHMARK_MODES = SID_MODES
VERIFIERS = ("none", "oracle", "embedding", "http")
SWEEP_AXES = ("beam", "cluster_k x lexical_m")
CSV_COLUMNS = ("mode", "cluster_k", "lexical_m", "beam", "R@1", "R@5", "rSum")


class NoQueriesError(ValueError):
    pass


def _gt_hit(ranking: RankedResult | Sequence[str], gt: Iterable[str], k: int) -> bool:
    ids = ranking.target_ids if isinstance(ranking, RankedResult) else list(ranking)
    wanted = set(gt)
    return any(t in wanted for t in ids[:k])


def recall_at_k(
    rankings: Mapping[str, RankedResult | Sequence[str]],
    queries: Sequence[Query],
    k: int,
) -> float:
    """Percentage of queries with any ground-truth target in the top ``k``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not queries:
        raise NoQueriesError("recall needs at least one query")
    hits = sum(_gt_hit(rankings[q.query_id], q.gt_targets, k) for q in queries)
    return 100.0 * hits / len(queries)


@dataclass(frozen=True)
class BenchmarkConfig:
    sid: SidParams = SidParams()
    eps: float = DEFAULT_EPS
    beam_size: int = 50
    gsv_k: int = DEFAULT_GSV_K
    gsv: str = "topk"
    verifier: str = "none"
    backoff: bool = True
    ks: tuple[int, ...] = (1, 5)

    def __post_init__(self) -> None:
        if self.gsv not in GSV_MODES:
            raise ValueError(f"unknown GSV mode {self.gsv!r}")
        if self.verifier not in VERIFIERS:
            raise ValueError(f"unknown verifier {self.verifier!r}")
        if self.beam_size < 1 or self.gsv_k < 1 or self.eps <= 0:
            raise ValueError("beam_size and gsv_k must be >= 1, eps > 0")

    @property
    def mode(self) -> str:
        return self.sid.mode

    def with_mode(self, mode: str) -> BenchmarkConfig:
        return replace(self, sid=replace(self.sid, mode=mode))

    def echo(self) -> dict:
        d = asdict(self)
        d["ks"] = list(self.ks)
        return d


@dataclass
class MetricReport:
    recalls: dict[int, float]
    ranks: dict[str, int | None]
    config: dict
    n_collisions: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def rsum(self) -> float:
        return sum(self.recalls.values())

    def __getitem__(self, key: str) -> float:
        if key == "rSum":
            return self.rsum
        if key.startswith("R@"):
            return self.recalls[int(key[2:])]
        raise KeyError(key)

    def to_text(self) -> str:
        lines = [
            f"# genret report v{FORMAT_VERSION} config_hash={config_hash(self.config)}",
            f"mode        {self.config['sid']['mode']}",
            f"queries     {len(self.ranks)}",
            f"collisions  {self.n_collisions}",
        ]
        for k, v in sorted(self.recalls.items()):
            lines.append(f"R@{k:<9} {v:.2f}")
        lines.append(f"rSum        {self.rsum:.2f}")
        lines.append("")
        lines.append("query_id\trank")
        for qid, rank in self.ranks.items():
            lines.append(f"{qid}\t{'-' if rank is None else rank}")
        return "\n".join(lines) + "\n"


def build_retriever(
    config: BenchmarkConfig,
    corpus: Corpus,
    train_queries: Sequence[Query],
    eval_queries: Sequence[Query] = (),
    embeddings: EmbeddingMatrix | None = None,
    table: SidTable | None = None,
) -> Retriever:
    provider = get_provider(config.sid.provider, config.sid.dim)
    if table is None:
        table = build_sid_table(corpus, config.sid, provider, embeddings)
    model = train(
        training_pairs(train_queries, table),
        config.eps,
        provider,
        vocabulary=sorted(table.vocabulary()),
        backoff=config.backoff,
    )
    verifier = None
    if config.mode != "no_gsv" and config.gsv != "off":
        verifier = make_verifier(config.verifier, eval_queries, provider, corpus.direction)
    return Retriever(
        corpus=corpus,
        table=table,
        model=model,
        verifier=verifier,
        beam_size=config.beam_size,
        gsv_k=config.gsv_k,
        gsv=config.gsv,
        constrained=config.mode != "no_constraint",
    )


def evaluate(retriever: Retriever, queries: Sequence[Query], config: BenchmarkConfig) -> MetricReport:
    if not queries:
        raise NoQueriesError("no evaluation queries")
    rankings = {q.query_id: retriever.retrieve(q.text) for q in queries}
    recalls = {k: recall_at_k(rankings, queries, k) for k in config.ks}
    ranks = {q.query_id: rankings[q.query_id].rank_of(q.gt_targets) for q in queries}
    return MetricReport(recalls, ranks, config.echo(), len(retriever.table.collisions))


def run_benchmark(
    config: BenchmarkConfig,
    corpus: Corpus,
    train_queries: Sequence[Query],
    eval_queries: Sequence[Query] | None = None,
    embeddings: EmbeddingMatrix | None = None,
) -> MetricReport:
    """Build identifiers, train, retrieve every evaluation query, score.

    Mode wiring: ``no_gsv`` drops verification and gives colliding
    identifiers numeric suffixes; ``no_sid`` swaps lexical words for
    per-target serial tokens; ``no_global`` drops the global token;
    ``no_dedup`` ignores the banned keyword sets; ``no_constraint`` decodes
    over the whole vocabulary.
    """
    eval_queries = list(train_queries if eval_queries is None else eval_queries)
    retriever = build_retriever(config, corpus, train_queries, eval_queries, embeddings)
    return evaluate(retriever, eval_queries, config)


@dataclass
class SweepRow:
    mode: str
    cluster_k: int
    lexical_m: int
    beam: int
    report: MetricReport

    def values(self) -> tuple:
        return (
            self.mode,
            self.cluster_k,
            self.lexical_m,
            self.beam,
            f"{self.report['R@1']:.2f}",
            f"{self.report['R@5']:.2f}",
            f"{self.report.rsum:.2f}",
        )


def sweep(
    config: BenchmarkConfig,
    corpus: Corpus,
    train_queries: Sequence[Query],
    eval_queries: Sequence[Query] | None,
    axis: str,
    values: Sequence,
    embeddings: EmbeddingMatrix | None = None,
) -> list[SweepRow]:
    """One report per grid point.

    ``axis="beam"`` takes beam widths; ``axis="cluster_k x lexical_m"``
    takes ``(k, m)`` pairs (see :func:`grid`). Identifiers and the model
    are built once per distinct identifier configuration.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ValueError("sweep axis has no values")
    if 1 not in config.ks or 5 not in config.ks:
        config = replace(config, ks=tuple(sorted(set(config.ks) | {1, 5})))
    eval_queries = list(train_queries if eval_queries is None else eval_queries)
    rows: list[SweepRow] = []
    if axis == "beam":
        retriever = build_retriever(config, corpus, train_queries, eval_queries, embeddings)
        for b in values:
            retriever.beam_size = int(b)
            cfg = replace(config, beam_size=int(b))
            rows.append(SweepRow(config.mode, config.sid.k, config.sid.m, int(b), evaluate(retriever, eval_queries, cfg)))
    else:
        for k, m in values:
            cfg = replace(config, sid=replace(config.sid, k=int(k), m=int(m)))
            report = run_benchmark(cfg, corpus, train_queries, eval_queries, embeddings)
            rows.append(SweepRow(config.mode, int(k), int(m), config.beam_size, report))
    return rows


def grid(ks: Sequence[int], ms: Sequence[int]) -> list[tuple[int, int]]:
    return list(itertools.product(ks, ms))


def sweep_csv(rows: Sequence[SweepRow], header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.values())
    return buf.getvalue()


def sweep_table(rows: Sequence[SweepRow]) -> str:
    cells = [CSV_COLUMNS] + [tuple(str(v) for v in r.values()) for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(CSV_COLUMNS))]
    return "\n".join("  ".join(c[i].rjust(widths[i]) for i in range(len(widths))) for c in cells) + "\n"
