"""IR metrics, qrels and run-file handling, and oracle pre-rankings.

Average precision follows the evaluated variant by default: the denominator
is the number of relevant files retrieved within the cutoff, not the size of
the truth set. ``map_convention="standard"`` switches to the conventional
denominator.
"""

import json
import logging
import random
from dataclasses import dataclass, field

from .errors import DepthTooSmall, MalformedRun

log = logging.getLogger(__name__)

P_CUTOFFS = (1, 5, 10, 20)
R_CUTOFFS = (1, 10, 20, 100, 500, 1000)


def precision_at_k(ranking, relevant, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for path in ranking[:k] if path in relevant)
    return hits / k


def reciprocal_rank(ranking, relevant) -> float:
    for j, path in enumerate(ranking):
        if path in relevant:
            return 1.0 / (j + 1)
    return 0.0


def recall_at_k(ranking, relevant, k: int) -> float:
    if not relevant:
        return 0.0
    hits = sum(1 for path in ranking[:k] if path in relevant)
    return hits / len(relevant)


def average_precision(ranking, relevant, k: int | None = None, denominator: str = "retrieved") -> float:
    """AP over the top-k ranking (full ranking when k is None).

    denominator="retrieved": relevant retrieved within k (the reproduced
    formula); "standard": all relevant. Zero hits give 0.
    """
    if k is None:
        k = len(ranking)
    hit_count = 0
    precision_sum = 0.0
    for i, path in enumerate(ranking[:k], start=1):
        if path in relevant:
            hit_count += 1
            precision_sum += hit_count / i
    if hit_count == 0:
        return 0.0
    if denominator == "standard":
        return precision_sum / len(relevant)
    return precision_sum / hit_count


@dataclass
class EvalReport:
    per_query: dict[str, dict[str, float]]
    macro: dict[str, float]
    query_count: int

    def metric_names(self) -> list[str]:
        return list(self.macro)


def metric_columns(p_cutoffs=P_CUTOFFS, r_cutoffs=R_CUTOFFS) -> list[str]:
    return ["MAP", "MRR", *[f"P@{k}" for k in p_cutoffs], *[f"R@{k}" for k in r_cutoffs]]


def query_metrics(ranking, relevant, p_cutoffs=P_CUTOFFS, r_cutoffs=R_CUTOFFS, map_convention: str = "paper") -> dict[str, float]:
    denominator = "standard" if map_convention == "standard" else "retrieved"
    out = {
        "MAP": average_precision(ranking, relevant, denominator=denominator),
        "MRR": reciprocal_rank(ranking, relevant),
    }
    for k in p_cutoffs:
        out[f"P@{k}"] = precision_at_k(ranking, relevant, k)
    for k in r_cutoffs:
        out[f"R@{k}"] = recall_at_k(ranking, relevant, k)
    return out


def evaluate_run(
    run: dict[str, list[str]],
    qrels: dict[str, set[str]],
    p_cutoffs=P_CUTOFFS,
    r_cutoffs=R_CUTOFFS,
    map_convention: str = "paper",
) -> EvalReport:
    """Macro-averaged metrics over the qrels queries.

    Queries in qrels with no run entry score 0 everywhere; run entries
    without qrels are ignored with a warning.
    """
    for qid in run:
        if qid not in qrels:
            log.warning("run has query %s with no qrels entry; ignored", qid)
    per_query = {}
    for qid, relevant in qrels.items():
        ranking = run.get(qid, [])
        per_query[qid] = query_metrics(ranking, relevant, p_cutoffs, r_cutoffs, map_convention)
    names = metric_columns(p_cutoffs, r_cutoffs)
    n = len(per_query)
    macro = {
        name: (sum(m[name] for m in per_query.values()) / n if n else 0.0)
        for name in names
    }
    return EvalReport(per_query=per_query, macro=macro, query_count=n)


def make_oracle_prerank(relevant, distractors, depth: int, seed) -> list[str]:
    """A length-depth ranking with the relevant paths planted at seeded
    uniform-random distinct positions and distractors filling the rest."""
    relevant = list(relevant)
    if len(relevant) > depth:
        raise DepthTooSmall(f"depth {depth} < {len(relevant)} relevant paths")
    fill = [d for d in distractors if d not in set(relevant)]
    if len(fill) < depth - len(relevant):
        raise ValueError("not enough distractors to fill the pre-ranking")
    rng = random.Random(seed)
    positions = rng.sample(range(depth), len(relevant))
    ranking: list[str | None] = [None] * depth
    for path, pos in zip(relevant, positions):
        ranking[pos] = path
    it = iter(fill)
    for i in range(depth):
        if ranking[i] is None:
            ranking[i] = next(it)
    return ranking  # type: ignore[return-value]


def read_qrels(path) -> dict[str, set[str]]:
    """Lines of ``query_id 0 path 1``."""
    qrels: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise MalformedRun(line_no, f"qrels line needs 4 columns, got {len(parts)}")
            qid, _, doc, rel = parts
            if rel != "0":
                qrels.setdefault(qid, set()).add(doc)
    return qrels


def write_qrels(qrels: dict[str, set[str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in qrels:
            for doc in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {doc} 1\n")


def read_run(path) -> dict[str, list[str]]:
    """Six-column run file -> query_id -> paths ordered by the rank column."""
    rows: dict[str, list[tuple[int, str]]] = {}
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise MalformedRun(line_no, f"expected 6 columns, got {len(parts)}")
            qid, _, doc, rank, score, _ = parts
            try:
                rank = int(rank)
                float(score)
            except ValueError:
                raise MalformedRun(line_no, f"bad rank/score {parts[3]!r}/{parts[4]!r}") from None
            if (qid, doc) in seen:
                raise MalformedRun(line_no, f"duplicate document {doc} for query {qid}")
            seen.add((qid, doc))
            rows.setdefault(qid, []).append((rank, doc))
    return {qid: [doc for _, doc in sorted(entries, key=lambda e: e[0])] for qid, entries in rows.items()}


def write_run(results: dict[str, list[tuple[str, float]]], path, tag: str = "histsearch") -> None:
    """results: query_id -> ranked (path, score). Written in given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid, ranking in results.items():
            for rank, (doc, score) in enumerate(ranking, start=1):
                fh.write(f"{qid} Q0 {doc} {rank} {score:.6f} {tag}\n")


def report_table(report: EvalReport, label: str = "run") -> str:
    """Aligned text table: metric columns across, one macro row."""
    names = report.metric_names()
    widths = [max(len(n), 6) for n in names]
    header = "type".ljust(8) + "  ".join(n.rjust(w) for n, w in zip(names, widths))
    row = label.ljust(8) + "  ".join(f"{report.macro[n]:.3f}".rjust(w) for n, w in zip(names, widths))
    footer = f"queries: {report.query_count}"
    return "\n".join([header, row, footer])


def report_jsonl(report: EvalReport) -> str:
    """Machine-readable variant: one line per query plus a macro line."""
    lines = []
    for qid in report.per_query:
        lines.append(json.dumps({"query_id": qid, **report.per_query[qid]}, ensure_ascii=False))
    lines.append(json.dumps({"query_id": None, "macro": True, "queries": report.query_count, **report.macro}))
    return "\n".join(lines) + "\n"
