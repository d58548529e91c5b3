"""Command line entry point.

Subcommands: ingest, index, fid, search, triplets, eval, oracle. Exit codes:
0 ok, 2 usage or missing input, 3 data-format error, 4 scorer or protocol
error, 1 anything else.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import bm25, commit_store, fid_map, metrics, triplets as triplets_mod
from .errors import (
    GitInvocationFailed,
    HistsearchError,
    MalformedRecord,
    MalformedRun,
    NotAGitRepository,
    ScorerFailure,
    ScorerUnavailable,
    UnknownCommit,
)
from .pipeline import AggregationStrategy, PipelineConfig, Query, SearchContext, run_pipeline
from .rerankers import Scorer, external_scorer, lexical_overlap_scorer

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_SCORER = 4


class ConstantScorer(Scorer):
    def __init__(self, value: float):
        self.value = float(value)
        self.descriptor = f"constant:{self.value}"

    def score_batch(self, pairs):
        return [self.value] * len(pairs)


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def read_queries(path) -> list[Query]:
    """Line-delimited query records {query_id, text, timestamp, source_commit_id?}."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                out.append(
                    Query(
                        query_id=str(payload["query_id"]),
                        text=payload["text"],
                        timestamp=int(payload["timestamp"]),
                        source_commit_id=payload.get("source_commit_id"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, "query", str(exc)) from exc
    return out


def load_run_config(path) -> dict:
    with open(_require_file(path, "config"), encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(0, "config", str(exc)) from exc


def make_scorer(spec, timeout: float = 60.0) -> Scorer | None:
    if spec in (None, "", "none"):
        return None
    if spec == "lexical":
        return lexical_overlap_scorer()
    if isinstance(spec, str) and spec.startswith("constant:"):
        return ConstantScorer(float(spec.split(":", 1)[1]))
    return external_scorer(spec, timeout=timeout)


def parse_stages(text: str) -> tuple[str, ...]:
    aliases = {
        "bm25": ("bm25",),
        "+commit": ("bm25", "commit"),
        "bm25+commit": ("bm25", "commit"),
        "+code": ("bm25", "commit", "code"),
        "bm25+commit+code": ("bm25", "commit", "code"),
        "full": ("bm25", "commit", "code"),
    }
    try:
        return aliases[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown stages {text!r}") from None


def _tokenizer_from(cfg: dict) -> bm25.TokenizerConfig:
    tok = cfg.get("tokenizer", {})
    return bm25.TokenizerConfig(
        mode=tok.get("mode", "code_aware_default"),
        lowercase=tok.get("lowercase", True),
        vocab_path=tok.get("vocab_path"),
    )


def build_context(cfg: dict) -> SearchContext:
    records = list(commit_store.read_store(_require_file(cfg["store"], "store")))
    index = None
    if cfg.get("index"):
        index = bm25.load_index(_require_file(cfg["index"], "index"))
    fid_cache = None
    if cfg.get("fid_cache"):
        fid_cache = fid_map.load_cache(_require_file(cfg["fid_cache"], "fid cache"))
    snapshot = None
    if cfg.get("git_dir"):
        snapshot = commit_store.snapshot(cfg["git_dir"], cfg.get("snapshot_commit"))
    return SearchContext.from_records(
        records,
        tokenizer=_tokenizer_from(cfg),
        k1=cfg.get("k1", bm25.DEFAULT_K1),
        b=cfg.get("b", bm25.DEFAULT_B),
        index=index,
        fid_cache=fid_cache,
        snapshot=snapshot,
    )


def pipeline_config_from(cfg: dict, stages: tuple[str, ...] | None = None) -> PipelineConfig:
    return PipelineConfig(
        bm25_k=cfg.get("bm25_k", 1000),
        commit_rerank_depth=cfg.get("commit_rerank_depth", 1000),
        code_rerank_depth=cfg.get("code_rerank_depth", 100),
        aggregation=AggregationStrategy(cfg.get("aggregation", "maxp")),
        stages=stages if stages is not None else tuple(cfg.get("stages", ("bm25", "commit", "code"))),
        skippable=frozenset(cfg.get("skippable", ())),
        patch_token_budget=cfg.get("patch_token_budget", 350),
    )


def cmd_ingest(args) -> int:
    records = commit_store.ingest_repository(
        args.git_dir,
        include_merges=not args.exclude_merges,
        max_commits=args.max_commits,
        owner=args.owner,
        repo_name=args.repo,
    )
    count = commit_store.write_store(records, args.out)
    print(f"ingested {count} records -> {args.out}")
    return EXIT_OK


def cmd_index(args) -> int:
    records = commit_store.read_store(_require_file(args.store, "store"))
    if args.exclude_merges:
        records = (r for r in records if not r.is_merge)
    config = bm25.TokenizerConfig(
        mode=args.tokenizer_mode,
        lowercase=not args.keep_case,
        vocab_path=args.vocab,
    )
    index = bm25.build_index(records, config, k1=args.k1, b=args.b)
    bm25.save_index(index, args.out)
    print(f"indexed {len(index.doc_table)} commits -> {args.out}")
    return EXIT_OK


def cmd_fid(args) -> int:
    records = commit_store.read_store(_require_file(args.store, "store"))
    cache = fid_map.build_fid_map(records)
    fid_map.save_cache(cache, args.out)
    histogram = fid_map.fid_path_histogram(cache)
    print(f"mapped {len(cache.by_fid)} file identities -> {args.out}")
    print("paths-per-identity histogram: " + json.dumps(histogram, sort_keys=True))
    if args.figures:
        from . import figures

        out_dir = Path(args.figures)
        out_dir.mkdir(parents=True, exist_ok=True)
        fig_path = out_dir / "fid_histogram.png"
        figures.save_fid_histogram(histogram, fig_path)
        print(f"wrote {fig_path}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = load_run_config(args.config)
    if args.k is not None:
        cfg["bm25_k"] = args.k
        cfg["commit_rerank_depth"] = min(cfg.get("commit_rerank_depth", 1000), args.k)
        cfg["code_rerank_depth"] = min(cfg.get("code_rerank_depth", 100), args.k)
    stages = args.stages if args.stages else None
    pconfig = pipeline_config_from(cfg, stages)
    ctx = build_context(cfg)
    queries = read_queries(_require_file(args.queries, "queries"))
    timeout = cfg.get("scorer_timeout", 60.0)
    commit_scorer = make_scorer(args.commit_scorer or cfg.get("commit_scorer"), timeout)
    code_scorer = make_scorer(args.code_scorer or cfg.get("code_scorer"), timeout)
    if args.no_mask:
        queries = [Query(q.query_id, q.text, 2**62, q.source_commit_id) for q in queries]
    elif args.mask is not None:
        queries = [Query(q.query_id, q.text, args.mask, q.source_commit_id) for q in queries]

    def one(q: Query):
        return q.query_id, run_pipeline(q, ctx, pconfig, commit_scorer, code_scorer)

    try:
        if args.jobs > 1:
            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                pairs = list(pool.map(one, queries))
        else:
            pairs = [one(q) for q in queries]
    finally:
        for scorer in (commit_scorer, code_scorer):
            if scorer is not None:
                scorer.close()
    results = dict(pairs)
    metrics.write_run(results, args.out, tag=args.tag)
    print(f"ran {len(results)} queries, stages={'+'.join(pconfig.stages)} -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = metrics.read_run(_require_file(args.run, "run"))
    qrels = metrics.read_qrels(_require_file(args.qrels, "qrels"))
    report = metrics.evaluate_run(
        run,
        qrels,
        p_cutoffs=tuple(args.p_cutoffs),
        r_cutoffs=tuple(args.r_cutoffs),
        map_convention=args.map_convention,
    )
    print(metrics.report_table(report, label=args.label))
    if args.out:
        Path(args.out).write_text(metrics.report_jsonl(report), encoding="utf-8")
        print(f"wrote {args.out}")
    # the figure lands next to the machine-readable report unless redirected
    figures_dir = args.figures or (Path(args.out).parent if args.out else None)
    if figures_dir:
        from . import figures

        out_dir = Path(figures_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fig_path = out_dir / f"{args.label}_metrics.png"
        figures.save_metrics_figure(report, fig_path, label=args.label)
        print(f"wrote {fig_path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    qrels = metrics.read_qrels(_require_file(args.qrels, "qrels"))
    pool = [
        line.strip()
        for line in _require_file(args.distractors, "distractor pool").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    results = {}
    for qid in qrels:
        ranking = metrics.make_oracle_prerank(sorted(qrels[qid]), pool, args.depth, f"{args.seed}:{qid}")
        results[qid] = [(path, 1.0 / (rank + 1)) for rank, path in enumerate(ranking)]
    metrics.write_run(results, args.out, tag="oracle-prerank")
    print(f"planted {len(results)} pre-rankings at depth {args.depth} -> {args.out}")
    return EXIT_OK


def cmd_triplets(args) -> int:
    cfg = load_run_config(args.config)
    ctx = build_context(cfg)
    queries = read_queries(_require_file(args.queries, "queries"))
    records = list(commit_store.read_store(cfg["store"]))
    truth = triplets_mod.truth_from_store(records, queries)
    diffs = triplets_mod.collect_diffs(records)
    if args.kind == "commit":
        result = triplets_mod.make_commit_triplets(
            queries,
            ctx.index,
            ctx.commit_files,
            ctx.commit_messages,
            truth,
            pos_limit=args.pos,
            neg_limit=args.neg,
            retrieve_k=args.retrieve_k,
            label_mode=args.label_mode,
            commit_diffs=diffs,
            easy_negatives=args.easy_negatives,
            seed=cfg.get("seed", 0),
        )
    else:
        result = triplets_mod.make_code_triplets(
            queries,
            ctx,
            truth,
            diffs,
            pos_limit=args.pos,
            neg_limit=args.neg,
            retrieve_k=args.retrieve_k,
            budget=args.budget,
        )
    count = triplets_mod.write_triplets(result, args.out)
    positives = sum(1 for t in result if t.label == 1)
    print(f"wrote {count} {args.kind} triplets ({positives} positive) -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="histsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scrape a local git repository into a store file")
    p.add_argument("git_dir")
    p.add_argument("--out", required=True)
    p.add_argument("--max-commits", type=int, default=None)
    p.add_argument("--exclude-merges", action="store_true")
    p.add_argument("--owner", default=None)
    p.add_argument("--repo", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build the commit-message index from a store")
    p.add_argument("store")
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=bm25.DEFAULT_K1)
    p.add_argument("--b", type=float, default=bm25.DEFAULT_B)
    p.add_argument("--tokenizer-mode", choices=["code_aware_default", "external_vocab"], default="code_aware_default")
    p.add_argument("--vocab", default=None)
    p.add_argument("--keep-case", action="store_true")
    p.add_argument("--exclude-merges", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("fid", help="build the file-identity cache from a store")
    p.add_argument("store")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", default=None, help="directory for the histogram figure")
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("search", help="run queries through the retrieval pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stages", type=parse_stages, default=None)
    p.add_argument("--k", type=int, default=None, help="override the initial retrieval depth")
    p.add_argument("--commit-scorer", default=None)
    p.add_argument("--code-scorer", default=None)
    p.add_argument("--mask", type=int, default=None, help="fixed mask timestamp for every query")
    p.add_argument("--no-mask", action="store_true", help="disable future-commit masking")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--tag", default="histsearch")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", default=None, help="machine-readable per-query report")
    p.add_argument("--figures", default=None, help="directory for the metrics figure")
    p.add_argument("--label", default="run")
    p.add_argument("--map-convention", choices=["paper", "standard"], default="paper")
    p.add_argument("--p-cutoffs", type=int, nargs="+", default=list(metrics.P_CUTOFFS))
    p.add_argument("--r-cutoffs", type=int, nargs="+", default=list(metrics.R_CUTOFFS))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="emit planted pre-rankings for the oracle setting")
    p.add_argument("--qrels", required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distractors", required=True, help="file with one candidate path per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("triplets", help="generate reranker training triplets")
    p.add_argument("--kind", choices=["commit", "code"], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pos", type=int, default=triplets_mod.POS_LIMIT)
    p.add_argument("--neg", type=int, default=triplets_mod.NEG_LIMIT)
    p.add_argument("--retrieve-k", type=int, default=1000)
    p.add_argument("--budget", type=int, default=350)
    p.add_argument("--label-mode", choices=["files", "diffs"], default="files")
    p.add_argument("--easy-negatives", action="store_true")
    p.set_defaults(func=cmd_triplets)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (FileNotFoundError, NotAGitRepository, UnknownCommit) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MalformedRecord, MalformedRun) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ScorerFailure, ScorerUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except (GitInvocationFailed, HistsearchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
