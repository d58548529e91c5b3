"""From scored commits to ranked current-state files.

Aggregates commit scores per file, resolves historical paths to the live
snapshot, and orchestrates the three ranking stages. Each rerank stage only
permutes its prefix, so recall at the stage depth is invariant by
construction.
"""

import enum
import logging
from dataclasses import dataclass, field, replace

from . import bm25, rerankers
from .bm25 import InvertedIndex, ScoredCommit, TokenizerConfig
from .commit_store import CommitFileRecord, FileStatus, RepoSnapshot, replay_snapshot
from .errors import MissingCommitFiles, ScorerUnavailable
from .fid_map import FidCache, build_fid_map, resolve_live

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    timestamp: int
    source_commit_id: str | None = None

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError("query timestamp must be positive")


class AggregationStrategy(str, enum.Enum):
    SUMP = "sump"
    MAXP = "maxp"
    AVGP = "avgp"


@dataclass
class ScoredFile:
    """A file with its aggregated score and the commits that produced it.

    best_rank is the 1-based rank of the file's best contributing commit in
    the originating retrieval; it makes tie-breaking deterministic.
    """

    path: str
    score: float
    contributing: list[tuple[str, float]]
    best_rank: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    bm25_k: int = 1000
    commit_rerank_depth: int = 1000
    code_rerank_depth: int = 100
    aggregation: AggregationStrategy = AggregationStrategy.MAXP
    stages: tuple[str, ...] = ("bm25", "commit", "code")
    skippable: frozenset[str] = frozenset()
    patch_token_budget: int = 350

    def __post_init__(self):
        if not (1 <= self.code_rerank_depth <= self.commit_rerank_depth <= self.bm25_k):
            raise ValueError("expected code_rerank_depth <= commit_rerank_depth <= bm25_k")
        for stage in self.stages:
            if stage not in ("bm25", "commit", "code"):
                raise ValueError(f"unknown stage {stage!r}")


def _reduce(scores: list[float], strategy: AggregationStrategy) -> float:
    if strategy == AggregationStrategy.SUMP:
        return sum(scores)
    if strategy == AggregationStrategy.MAXP:
        return max(scores)
    return sum(scores) / len(scores)


def aggregate_files(
    scored_commits: list[ScoredCommit],
    commit_files: dict[str, list[str]],
    strategy: AggregationStrategy = AggregationStrategy.MAXP,
) -> list[ScoredFile]:
    """Reduce per-commit scores to per-file scores.

    Output is sorted by score descending; ties go to the file whose best
    contributing commit ranks higher, then to the lexicographically smaller
    path.
    """
    per_file: dict[str, ScoredFile] = {}
    for rank, sc in enumerate(scored_commits, start=1):
        try:
            files = commit_files[sc.commit_id]
        except KeyError:
            raise MissingCommitFiles(sc.commit_id) from None
        for path in files:
            entry = per_file.get(path)
            if entry is None:
                per_file[path] = ScoredFile(path, sc.score, [(sc.commit_id, sc.score)], rank)
            else:
                entry.contributing.append((sc.commit_id, sc.score))
    out = []
    for entry in per_file.values():
        entry.score = _reduce([s for _, s in entry.contributing], strategy)
        out.append(entry)
    out.sort(key=lambda f: (-f.score, f.best_rank, f.path))
    return out


def filter_to_current(
    files: list[ScoredFile],
    fid_cache: FidCache,
    snapshot: RepoSnapshot,
    strategy: AggregationStrategy = AggregationStrategy.MAXP,
) -> list[ScoredFile]:
    """Map historical paths to live ones, dropping dead files and merging
    historical paths that resolve to the same live file."""
    merged: dict[str, ScoredFile] = {}
    for f in files:
        live = resolve_live(fid_cache, f.path, snapshot)
        if live is None:
            continue
        entry = merged.get(live)
        if entry is None:
            merged[live] = ScoredFile(live, f.score, list(f.contributing), f.best_rank)
        else:
            seen = {cid for cid, _ in entry.contributing}
            entry.contributing.extend((cid, s) for cid, s in f.contributing if cid not in seen)
            entry.best_rank = min(entry.best_rank, f.best_rank)
    out = []
    for entry in merged.values():
        entry.score = _reduce([s for _, s in entry.contributing], strategy)
        out.append(entry)
    out.sort(key=lambda f: (-f.score, f.best_rank, f.path))
    return out


@dataclass
class SearchContext:
    """Everything a query needs: the index plus store-derived lookups."""

    index: InvertedIndex
    fid_cache: FidCache
    snapshot: RepoSnapshot
    commit_files: dict[str, list[str]]
    commit_messages: dict[str, str]
    contents: dict[str, str | None]

    @classmethod
    def from_records(
        cls,
        records,
        tokenizer: TokenizerConfig = TokenizerConfig(),
        k1: float = bm25.DEFAULT_K1,
        b: float = bm25.DEFAULT_B,
        index: InvertedIndex | None = None,
        fid_cache: FidCache | None = None,
        snapshot: RepoSnapshot | None = None,
        contents: dict[str, str | None] | None = None,
    ) -> "SearchContext":
        records = list(records)
        if index is None:
            index = bm25.build_index(records, tokenizer, k1=k1, b=b)
        if fid_cache is None:
            fid_cache = build_fid_map(records)
        if snapshot is None or contents is None:
            replayed_snapshot, replayed_contents = replay_snapshot(records)
            snapshot = snapshot or replayed_snapshot
            contents = contents if contents is not None else replayed_contents
        commit_files: dict[str, list[str]] = {}
        commit_messages: dict[str, str] = {}
        for rec in records:
            commit_files.setdefault(rec.commit_id, []).append(rec.file_path)
            commit_messages.setdefault(rec.commit_id, rec.commit_message)
        return cls(index, fid_cache, snapshot, commit_files, commit_messages, contents)


def retrieve_files(query: Query, ctx: SearchContext, config: PipelineConfig) -> list[ScoredFile]:
    """Masked BM25 over commits, aggregated to files, filtered to the live
    snapshot, truncated to bm25_k."""
    hits = bm25.search(ctx.index, query.text, config.bm25_k, mask_after=query.timestamp)
    if not hits:
        return []
    files = aggregate_files(hits, ctx.commit_files, config.aggregation)
    live = filter_to_current(files, ctx.fid_cache, ctx.snapshot, config.aggregation)
    return live[: config.bm25_k]


def search_files(query: Query, ctx: SearchContext, config: PipelineConfig) -> list[tuple[str, float]]:
    return [(f.path, f.score) for f in retrieve_files(query, ctx, config)]


def run_pipeline(
    query: Query,
    ctx: SearchContext,
    config: PipelineConfig,
    commit_scorer: "rerankers.Scorer | None" = None,
    code_scorer: "rerankers.Scorer | None" = None,
) -> list[tuple[str, float]]:
    """Full retrieval: BM25 files, then the two prefix reranking stages."""
    files = retrieve_files(query, ctx, config)
    if "commit" in config.stages:
        if commit_scorer is None:
            if "commit" not in config.skippable:
                raise ScorerUnavailable("commit stage enabled but no scorer given")
            log.warning("commit stage skipped: no scorer")
        else:
            files = rerankers.rerank_by_commits(
                query.text, files, config.commit_rerank_depth, commit_scorer, ctx.commit_messages
            )
    if "code" in config.stages:
        if code_scorer is None:
            if "code" not in config.skippable:
                raise ScorerUnavailable("code stage enabled but no scorer given")
            log.warning("code stage skipped: no scorer")
        else:
            files = rerankers.rerank_by_code(
                query.text,
                files,
                config.code_rerank_depth,
                code_scorer,
                ctx.contents,
                budget=config.patch_token_budget,
                tokenizer=rerankers.resolve_tokenizer(getattr(code_scorer, "tokenizer_name", None)),
            )
    return [(f.path, f.score) for f in files]
