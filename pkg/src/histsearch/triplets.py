"""Training triplets for the two rerankers.

Commit-message triplets label a retrieved commit positive when it touched
any ground-truth file. Code-patch triplets label a retrieved file positive
when its best contributing commit's diff shares a nontrivial changed line
with the ground-truth diffs; positive passages are the patches overlapping
that diff, negatives take the file's first patch. Per query, at most the
first ten of each class survive, in retrieval order.
"""

import json
import logging
import random
import re
from dataclasses import dataclass, field

from . import bm25
from .errors import MalformedRecord
from .pipeline import AggregationStrategy, PipelineConfig, Query, SearchContext, retrieve_files
from .rerankers import split_linewise

log = logging.getLogger(__name__)

POS_LIMIT = 10
NEG_LIMIT = 10


@dataclass(frozen=True)
class Triplet:
    query_id: str
    query_text: str
    passage_text: str
    label: int
    kind: str  # commit_message | code_patch
    commit_id: str
    file_path: str | None = None
    span: tuple[int, int] | None = None


@dataclass
class TruthEntry:
    files: list[str]
    diffs: dict[str, str]


TruthSet = dict[str, TruthEntry]


def truth_from_store(records, queries: list[Query]) -> TruthSet:
    """Ground truth per query from its source commit's file records."""
    by_commit: dict[str, TruthEntry] = {}
    for rec in records:
        entry = by_commit.setdefault(rec.commit_id, TruthEntry([], {}))
        entry.files.append(rec.file_path)
        entry.diffs[rec.file_path] = rec.diff
    truth: TruthSet = {}
    for q in queries:
        if q.source_commit_id is None:
            log.warning("query %s has no source commit; no truth derived", q.query_id)
            continue
        entry = by_commit.get(q.source_commit_id)
        if entry is None:
            log.warning("query %s source commit %s not in store", q.query_id, q.source_commit_id)
            continue
        truth[q.query_id] = entry
    return truth


_TRIVIAL_CHARS = set("{}()[];,")


def _changed_content_lines(diff: str | None) -> set[str]:
    out = set()
    if not diff:
        return out
    for line in diff.split("\n"):
        if line.startswith("+++") or line.startswith("---"):
            continue
        if line and line[0] in "+-":
            stripped = line[1:].strip()
            if not stripped:
                continue
            if all(ch in _TRIVIAL_CHARS or ch.isspace() for ch in stripped):
                continue
            out.add(stripped)
    return out


def diff_line_intersection(d1: str | None, d2: str | None) -> int:
    """Number of distinct nontrivial changed lines shared by two diffs."""
    return len(_changed_content_lines(d1) & _changed_content_lines(d2))


_HUNK = re.compile(r"^@@ -\d+(?:,\d+)? \+(\d+)(?:,(\d+))? @@")


def added_line_numbers(diff: str | None) -> set[int]:
    """New-side line numbers of the added lines in a unified diff."""
    out: set[int] = set()
    if not diff:
        return out
    counter = None
    for line in diff.split("\n"):
        m = _HUNK.match(line)
        if m:
            counter = int(m.group(1))
            continue
        if counter is None:
            continue
        if line.startswith("+++") or line.startswith("---"):
            continue
        if line.startswith("+"):
            out.add(counter)
            counter += 1
        elif line.startswith("-"):
            pass
        else:
            counter += 1
    return out


def make_commit_triplets(
    queries: list[Query],
    index: bm25.InvertedIndex,
    commit_files: dict[str, list[str]],
    commit_messages: dict[str, str],
    truth: TruthSet,
    pos_limit: int = POS_LIMIT,
    neg_limit: int = NEG_LIMIT,
    retrieve_k: int = 1000,
    label_mode: str = "files",
    commit_diffs: dict[str, dict[str, str]] | None = None,
    easy_negatives: bool = False,
    seed: int = 0,
) -> list[Triplet]:
    """Walk each query's masked pre-aggregation commit ranking and keep the
    first pos_limit positives and neg_limit negatives.

    label_mode "files" intersects the commit's files with the truth files;
    "diffs" uses nontrivial changed-line intersection against the truth
    diffs (requires commit_diffs). easy_negatives samples negatives
    uniformly from the whole negative pool instead of taking the first ones.
    """
    if label_mode == "diffs" and commit_diffs is None:
        raise ValueError("label_mode='diffs' requires commit_diffs")
    out: list[Triplet] = []
    for q in queries:
        entry = truth.get(q.query_id)
        if entry is None:
            log.warning("query %s has no truth entry; skipped", q.query_id)
            continue
        truth_files = set(entry.files)
        hits = bm25.search(index, q.text, retrieve_k, mask_after=q.timestamp)
        positives: list[Triplet] = []
        negatives: list[Triplet] = []
        for hit in hits:
            message = commit_messages.get(hit.commit_id, "")
            if not message:
                continue
            if label_mode == "diffs":
                combined = "\n".join(commit_diffs.get(hit.commit_id, {}).values())
                positive = any(
                    diff_line_intersection(entry.diffs[f], combined) > 0 for f in entry.files
                )
            else:
                positive = bool(truth_files & set(commit_files.get(hit.commit_id, ())))
            triplet = Triplet(
                query_id=q.query_id,
                query_text=q.text,
                passage_text=message,
                label=1 if positive else 0,
                kind="commit_message",
                commit_id=hit.commit_id,
            )
            if positive:
                if len(positives) < pos_limit:
                    positives.append(triplet)
            else:
                negatives.append(triplet)
            if len(positives) >= pos_limit and not easy_negatives and len(negatives) >= neg_limit:
                break
        if easy_negatives and len(negatives) > neg_limit:
            rng = random.Random(f"{seed}:{q.query_id}")
            keep = set(rng.sample(range(len(negatives)), neg_limit))
            negatives = [t for i, t in enumerate(negatives) if i in keep]
        else:
            negatives = negatives[:neg_limit]
        if not positives:
            log.info("query %s produced no positive commit triplets", q.query_id)
        out.extend(positives)
        out.extend(negatives)
    return out


def make_code_triplets(
    queries: list[Query],
    ctx: SearchContext,
    truth: TruthSet,
    diffs_by_commit: dict[str, dict[str, str]],
    pos_limit: int = POS_LIMIT,
    neg_limit: int = NEG_LIMIT,
    retrieve_k: int = 1000,
    budget: int = 350,
) -> list[Triplet]:
    """Code-patch triplets from file-aggregated, masked, current-state
    candidates; the diff of each candidate's best contributing commit
    drives the label and the positive patch choice."""
    config = PipelineConfig(
        bm25_k=retrieve_k,
        commit_rerank_depth=retrieve_k,
        code_rerank_depth=min(100, retrieve_k),
        aggregation=AggregationStrategy.MAXP,
    )
    out: list[Triplet] = []
    for q in queries:
        entry = truth.get(q.query_id)
        if entry is None:
            log.warning("query %s has no truth entry; skipped", q.query_id)
            continue
        candidates = retrieve_files(q, ctx, config)
        pos_count = 0
        neg_count = 0
        for f in candidates:
            if pos_count >= pos_limit and neg_count >= neg_limit:
                break
            best_commit, _ = max(f.contributing, key=lambda cs: cs[1])
            candidate_diff = _diff_for_file(ctx, diffs_by_commit, best_commit, f.path)
            if candidate_diff is None:
                log.warning("no stored diff for commit %s of %s; skipped", best_commit, f.path)
                continue
            content = ctx.contents.get(f.path)
            if not content:
                log.warning("no current content for %s; skipped", f.path)
                continue
            patches = split_linewise(content, budget, live_path=f.path)
            if not patches:
                continue
            positive = any(
                diff_line_intersection(entry.diffs[t], candidate_diff) > 0 for t in entry.files
            )
            if positive:
                changed = added_line_numbers(candidate_diff)
                chosen = [p for p in patches if any(p.start_line <= n <= p.end_line for n in changed)]
                if not chosen:
                    log.info("diff of %s does not overlap current %s; using first patch", best_commit, f.path)
                    chosen = [patches[0]]
                for patch in chosen:
                    if pos_count >= pos_limit:
                        break
                    if not patch.text.strip():
                        continue
                    out.append(_code_triplet(q, patch, 1, best_commit))
                    pos_count += 1
            else:
                if neg_count >= neg_limit:
                    continue
                patch = patches[0]
                if not patch.text.strip():
                    continue
                out.append(_code_triplet(q, patch, 0, best_commit))
                neg_count += 1
    return out


def _code_triplet(q: Query, patch, label: int, commit_id: str) -> Triplet:
    return Triplet(
        query_id=q.query_id,
        query_text=q.text,
        passage_text=patch.text,
        label=label,
        kind="code_patch",
        commit_id=commit_id,
        file_path=patch.live_path,
        span=(patch.start_line, patch.end_line),
    )


def _diff_for_file(ctx: SearchContext, diffs_by_commit, commit_id: str, live_path: str) -> str | None:
    per_path = diffs_by_commit.get(commit_id)
    if not per_path:
        return None
    fid = ctx.fid_cache.by_path.get(live_path)
    if fid is not None:
        for info in ctx.fid_cache.by_fid[fid].paths:
            diff = per_path.get(info.path)
            if diff is not None:
                return diff
    return per_path.get(live_path)


def collect_diffs(records) -> dict[str, dict[str, str]]:
    """commit_id -> file path -> diff, straight from the store."""
    out: dict[str, dict[str, str]] = {}
    for rec in records:
        out.setdefault(rec.commit_id, {})[rec.file_path] = rec.diff
    return out


def write_triplets(triplets, out) -> int:
    count = 0
    with open(out, "w", encoding="utf-8") as fh:
        for t in triplets:
            payload = {
                "query_id": t.query_id,
                "query_text": t.query_text,
                "passage_text": t.passage_text,
                "label": t.label,
                "kind": t.kind,
                "commit_id": t.commit_id,
            }
            if t.file_path is not None:
                payload["file_path"] = t.file_path
            if t.span is not None:
                payload["span"] = list(t.span)
            fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_triplets(path) -> list[Triplet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
                span = payload.get("span")
                out.append(
                    Triplet(
                        query_id=payload["query_id"],
                        query_text=payload["query_text"],
                        passage_text=payload["passage_text"],
                        label=payload["label"],
                        kind=payload["kind"],
                        commit_id=payload["commit_id"],
                        file_path=payload.get("file_path"),
                        span=tuple(span) if span else None,
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise MalformedRecord(line_no, "triplet", str(exc)) from exc
    return out
