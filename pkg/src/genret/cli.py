"""Command-line entry point.

Settings come from an optional JSON config file (``--config``); any flag
given on the command line overrides the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .artifacts import ArtifactError, atomic_write_text, check_hash, config_hash
from .corpus import Corpus, CorpusError, Direction, dump_queries, load_corpus, load_queries, save_corpus, save_queries
from .embed import EmbeddingError, EmbeddingMatrix, get_provider, load_embeddings
from .evaluation import (
    BENCHMARK_MODES,
    VERIFIERS,
    BenchmarkConfig,
    MetricReport,
    evaluate,
    grid,
    run_benchmark,
    sweep,
    sweep_csv,
    sweep_table,
)
from .gsv import GSV_MODES, make_verifier
from .lm import load_model, save_model, train
from .pipeline import Retriever, training_pairs
from .sid.table import SidParams, build_sid_table, describe_sid, load_sid_table, save_sid_table, sid_config_hash
from .synthetic import collision_suite, memorization_suite

log = logging.getLogger("genret")

DEFAULT_PATHS = {
    "corpus": None,
    "queries": None,
    "train_queries": None,
    "embeddings": None,
    "sid_table": "sids.jsonl",
    "model": "model.bin",
    "out_dir": "reports",
}
DEFAULT_PARAMS = {
    "k": 128,
    "m": 4,
    "M": 5,
    "ngram_max": 3,
    "eps": 0.01,
    "B": 50,
    "gsv_k": 10,
    "seed": 0,
    "max_iter": 100,
    "dim": 256,
}
DEFAULT_SWEEP = {"axis": "beam", "beam": [10, 20, 30, 40, 50], "cluster_k": [16, 32, 64, 128], "lexical_m": [2, 3, 4, 5, 6]}


class CliError(Exception):
    pass


@dataclass
class ExperimentConfig:
    paths: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_PATHS))
    params: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_PARAMS))
    provider: str = "hashing"
    mode: str = "full"
    verifier: str = "none"
    gsv: str = "topk"
    backoff: bool = True
    direction: str = "to_image"
    thresholds: dict[str, float] = field(default_factory=dict)
    sweep: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_SWEEP))

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CliError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc.msg})") from None
        cfg = cls()
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise CliError(f"{path}: unknown config keys {sorted(unknown)}")
        for key, value in raw.items():
            if isinstance(getattr(cfg, key), dict):
                getattr(cfg, key).update(value)
            else:
                setattr(cfg, key, value)
        return cfg

    def sid_params(self) -> SidParams:
        p = self.params
        return SidParams(
            k=int(p["k"]),
            m=int(p["m"]),
            M=int(p["M"]),
            ngram_max=int(p["ngram_max"]),
            seed=int(p["seed"]),
            max_iter=int(p["max_iter"]),
            provider=self.provider,
            dim=int(p["dim"]),
            mode=self.mode,
        )

    def benchmark(self) -> BenchmarkConfig:
        return BenchmarkConfig(
            sid=self.sid_params(),
            eps=float(self.params["eps"]),
            beam_size=int(self.params["B"]),
            gsv_k=int(self.params["gsv_k"]),
            gsv=self.gsv,
            verifier=self.verifier,
            backoff=bool(self.backoff),
        )

    def path(self, name: str, required: bool = True) -> Path | None:
        value = self.paths.get(name)
        if value is None:
            if required:
                raise CliError(f"no {name.replace('_', ' ')} path configured (set paths.{name} or --{name.replace('_', '-')})")
            return None
        return Path(value)


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    for name in DEFAULT_PATHS:
        value = getattr(args, name, None)
        if value is not None:
            cfg.paths[name] = value
    for name in DEFAULT_PARAMS:
        value = getattr(args, f"p_{name}", None)
        if value is not None:
            cfg.params[name] = value
    for name in ("provider", "mode", "verifier", "gsv", "direction"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "no_backoff", False):
        cfg.backoff = False
    return cfg


# ---------------------------------------------------------------- loading


def _load_corpus(cfg: ExperimentConfig) -> Corpus:
    path = cfg.path("corpus")
    if not path.exists():
        raise CliError(f"corpus file not found: {path}")
    return load_corpus(path, Direction(cfg.direction))


def _load_queries(cfg: ExperimentConfig, corpus: Corpus, name: str):
    path = cfg.path(name)
    if not path.exists():
        raise CliError(f"{name.replace('_', ' ')} file not found: {path}")
    return load_queries(path, corpus)


def _train_queries(cfg: ExperimentConfig, corpus: Corpus):
    name = "train_queries" if cfg.paths.get("train_queries") else "queries"
    return _load_queries(cfg, corpus, name)


def _load_embeddings(cfg: ExperimentConfig, corpus: Corpus) -> EmbeddingMatrix | None:
    path = cfg.path("embeddings", required=False)
    if path is None:
        return None
    return load_embeddings(path, expected_rows=len(corpus))


def _model_hash(sid_hash: str, cfg: ExperimentConfig, train_queries) -> str:
    digest = hashlib.sha256(dump_queries(train_queries).encode("utf-8")).hexdigest()
    return config_hash(
        {"sid": sid_hash, "eps": float(cfg.params["eps"]), "backoff": bool(cfg.backoff), "train": digest}
    )


def _load_table(cfg: ExperimentConfig, corpus: Corpus):
    path = cfg.path("sid_table")
    if not path.exists():
        raise CliError(f"SID table not found: {path} (run build-ids first)")
    table = load_sid_table(path)
    check_hash(path, table.config_hash, sid_config_hash(corpus, cfg.sid_params(), _load_embeddings(cfg, corpus)))
    return table


# ---------------------------------------------------------------- commands


def cmd_build_ids(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    params = cfg.sid_params()
    table = build_sid_table(corpus, params, get_provider(cfg.provider, params.dim), _load_embeddings(cfg, corpus))
    out = cfg.path("sid_table")
    save_sid_table(table, out)
    if not args.quiet:
        for tid, sid in table.sids.items():
            print(f"{tid}\t{sid}")
    print(f"{len(table.sids)} identifiers written to {out}; {len(table.collisions)} collision groups")
    for group in table.collisions:
        print(f"  collision: {' '.join(group.tokens)} <- {', '.join(group.members)}")
    return 0


def cmd_train(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    table = _load_table(cfg, corpus)
    queries = _train_queries(cfg, corpus)
    model = train(
        training_pairs(queries, table),
        float(cfg.params["eps"]),
        get_provider(cfg.provider, int(cfg.params["dim"])),
        vocabulary=sorted(table.vocabulary()),
        backoff=bool(cfg.backoff),
        config_hash=_model_hash(table.config_hash, cfg, queries),
    )
    out = cfg.path("model")
    save_model(model, out)
    print(f"trained on {len(queries)} queries, |V|={len(model.vocabulary)}; model written to {out}")
    return 0


def _load_retriever(cfg: ExperimentConfig):
    corpus = _load_corpus(cfg)
    table = _load_table(cfg, corpus)
    queries = _train_queries(cfg, corpus)
    model_path = cfg.path("model")
    if not model_path.exists():
        raise CliError(f"model not found: {model_path} (run train first)")
    model = load_model(model_path)
    check_hash(model_path, model.config_hash, _model_hash(table.config_hash, cfg, queries))
    bench = cfg.benchmark()
    eval_queries = queries
    if cfg.verifier == "oracle" and cfg.paths.get("queries"):
        eval_queries = _load_queries(cfg, corpus, "queries")
    verifier = None
    if cfg.mode != "no_gsv" and cfg.gsv != "off":
        verifier = make_verifier(cfg.verifier, eval_queries, model.provider, corpus.direction)
    retriever = Retriever(
        corpus=corpus,
        table=table,
        model=model,
        verifier=verifier,
        beam_size=bench.beam_size,
        gsv_k=bench.gsv_k,
        gsv=bench.gsv,
        constrained=cfg.mode != "no_constraint",
    )
    return retriever, bench


def cmd_retrieve(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    retriever, _ = _load_retriever(cfg)
    result = retriever.retrieve(args.query)
    if not result.entries:
        print("no identifier decoded")
        return 0
    for rank, entry in enumerate(result.entries[: args.top], start=1):
        print(f"{rank:>3}  {entry.target_id}  {entry.score:.6f}  {' '.join(entry.tokens)}")
    return 0


def _write_report(cfg: ExperimentConfig, report: MetricReport, name: str) -> Path:
    out = cfg.path("out_dir") / name
    atomic_write_text(out, report.to_text())
    return out


def _thresholds_met(cfg: ExperimentConfig, report: MetricReport) -> bool:
    ok = True
    for metric, minimum in cfg.thresholds.items():
        value = report[metric]
        if value < float(minimum):
            print(f"threshold violated: {metric} = {value:.2f} < {float(minimum):.2f}", file=sys.stderr)
            ok = False
    return ok


def cmd_eval(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    if args.from_artifacts:
        retriever, bench = _load_retriever(cfg)
        queries = _load_queries(cfg, retriever.corpus, "queries")
        report = evaluate(retriever, queries, bench)
    else:
        corpus = _load_corpus(cfg)
        train_queries = _train_queries(cfg, corpus)
        queries = _load_queries(cfg, corpus, "queries")
        report = run_benchmark(cfg.benchmark(), corpus, train_queries, queries, _load_embeddings(cfg, corpus))
    out = _write_report(cfg, report, f"report-{cfg.mode}.txt")
    print(f"R@1 {report['R@1']:.2f}  R@5 {report['R@5']:.2f}  rSum {report.rsum:.2f}  ({out})")
    return 0 if _thresholds_met(cfg, report) else 1


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    train_queries = _train_queries(cfg, corpus)
    queries = _load_queries(cfg, corpus, "queries")
    plan = dict(cfg.sweep)
    if args.axis:
        plan["axis"] = args.axis
    for key in ("beam", "cluster_k", "lexical_m"):
        value = getattr(args, f"sweep_{key}", None)
        if value is not None:
            plan[key] = _int_list(value)
    bench = cfg.benchmark()
    if plan["axis"] == "beam":
        axis, values = "beam", list(plan["beam"])
    elif plan["axis"] in ("grid", "cluster_k x lexical_m"):
        axis, values = "cluster_k x lexical_m", grid(plan["cluster_k"], plan["lexical_m"])
    else:
        raise CliError(f"unknown sweep axis {plan['axis']!r}")
    rows = sweep(bench, corpus, train_queries, queries, axis, values, _load_embeddings(cfg, corpus))
    tag = "beam" if axis == "beam" else "grid"
    header = f"genret sweep v1 axis={tag} config_hash={config_hash(bench.echo())}"
    out_dir = cfg.path("out_dir")
    atomic_write_text(out_dir / f"sweep-{tag}.csv", sweep_csv(rows, header))
    table = sweep_table(rows)
    atomic_write_text(out_dir / f"sweep-{tag}.txt", f"# {header}\n{table}")
    print(table, end="")
    return 0


def cmd_inspect_sid(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    path = cfg.path("sid_table")
    if not path.exists():
        raise CliError(f"SID table not found: {path}")
    table = load_sid_table(path)
    if args.target_id not in table.sids:
        raise CliError(f"unknown target {args.target_id!r}")
    print(describe_sid(table, args.target_id))
    return 0


def cmd_gen_synthetic(cfg: ExperimentConfig, args: argparse.Namespace) -> int:
    seed = int(cfg.params["seed"])
    suite = memorization_suite(args.n, seed) if args.suite == "memorization" else collision_suite(seed=seed)
    out = Path(args.out)
    save_corpus(suite.corpus, out / "corpus.jsonl")
    save_queries(suite.train_queries, out / "train_queries.jsonl")
    save_queries(suite.eval_queries, out / "queries.jsonl")
    print(f"{len(suite.corpus)} targets, {len(suite.eval_queries)} queries written to {out}")
    return 0


# ---------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    g = p.add_argument_group("paths")
    for name in DEFAULT_PATHS:
        g.add_argument(f"--{name.replace('_', '-')}", dest=name, metavar="PATH")
    g = p.add_argument_group("parameters")
    g.add_argument("--k", dest="p_k", type=int, help="number of clusters (global IDs)")
    g.add_argument("--m", dest="p_m", type=int, help="lexical ID length")
    g.add_argument("--M", dest="p_M", type=int, help="banned keywords per cluster")
    g.add_argument("--ngram-max", dest="p_ngram_max", type=int)
    g.add_argument("--eps", dest="p_eps", type=float, help="smoothing constant")
    g.add_argument("--beam", "-B", dest="p_B", type=int, help="beam width")
    g.add_argument("--gsv-k", dest="p_gsv_k", type=int, help="verification candidate count")
    g.add_argument("--seed", dest="p_seed", type=int)
    g.add_argument("--max-iter", dest="p_max_iter", type=int)
    g.add_argument("--dim", dest="p_dim", type=int, help="embedding dimension")
    g.add_argument("--provider", choices=["hashing"])
    g.add_argument("--mode", choices=BENCHMARK_MODES)
    g.add_argument("--verifier", choices=VERIFIERS)
    g.add_argument("--gsv", choices=GSV_MODES)
    g.add_argument("--direction", choices=[d.value for d in Direction])
    g.add_argument("--no-backoff", action="store_true", help="unseen queries get the uniform distribution")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genret", description="Generative retrieval over structured identifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-ids", help="construct and save the identifier table")
    p.add_argument("-q", "--quiet", action="store_true", help="only print the summary")
    p.set_defaults(func=cmd_build_ids)

    p = sub.add_parser("train", help="train the reference model on (query, identifier) pairs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("retrieve", help="rank targets for one query")
    p.add_argument("query")
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="benchmark one mode and write a report")
    p.add_argument("--from-artifacts", action="store_true", help="use the saved SID table and model")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="beam width or identifier configuration sweep")
    p.add_argument("--axis", choices=["beam", "grid"])
    p.add_argument("--beams", dest="sweep_beam", metavar="B1,B2,...")
    p.add_argument("--cluster-ks", dest="sweep_cluster_k", metavar="K1,K2,...")
    p.add_argument("--lexical-ms", dest="sweep_lexical_m", metavar="M1,M2,...")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect-sid", help="show one target's identifier")
    p.add_argument("target_id")
    p.set_defaults(func=cmd_inspect_sid)

    p = sub.add_parser("gen-synthetic", help="write a synthetic benchmark suite")
    p.add_argument("--suite", choices=["memorization", "collision"], default="memorization")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    for p in sub.choices.values():
        _add_common(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
        return args.func(cfg, args)
    except (CliError, CorpusError, ArtifactError, EmbeddingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
