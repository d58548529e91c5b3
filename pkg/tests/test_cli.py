import json

import pytest

from histsearch import metrics
from histsearch.cli import main


@pytest.fixture()
def workspace(fixture_repo, tmp_path):
    """Artifacts built from the fixture repo through the CLI itself."""
    store = tmp_path / "store.jsonl"
    assert main(["ingest", str(fixture_repo), "--out", str(store)]) == 0
    return tmp_path, store


def _write_queries(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def _config(tmp_path, store, **extra):
    cfg = {"store": str(store), "bm25_k": 50, "commit_rerank_depth": 20, "code_rerank_depth": 5}
    cfg.update(extra)
    out = tmp_path / "config.json"
    out.write_text(json.dumps(cfg))
    return out


def test_ingest_writes_full_store(workspace):
    _, store = workspace
    assert len(store.read_text().splitlines()) == 14


def test_ingest_and_index_byte_identical_on_rerun(workspace, fixture_repo):
    tmp_path, store = workspace
    again = tmp_path / "store2.jsonl"
    assert main(["ingest", str(fixture_repo), "--out", str(again)]) == 0
    assert again.read_bytes() == store.read_bytes()
    i1, i2 = tmp_path / "i1.txt", tmp_path / "i2.txt"
    main(["index", str(store), "--out", str(i1)])
    main(["index", str(store), "--out", str(i2)])
    assert i1.read_bytes() == i2.read_bytes()


def test_index_and_fid_commands(workspace, capsys):
    tmp_path, store = workspace
    index_path = tmp_path / "index.txt"
    assert main(["index", str(store), "--out", str(index_path)]) == 0
    assert "indexed 10 commits" in capsys.readouterr().out
    cache_path = tmp_path / "fids.txt"
    figures_dir = tmp_path / "figs"
    assert main(["fid", str(store), "--out", str(cache_path), "--figures", str(figures_dir)]) == 0
    out = capsys.readouterr().out
    assert "file identities" in out
    assert (figures_dir / "fid_histogram.png").exists()


def test_missing_input_exits_2(tmp_path):
    assert main(["index", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "x")]) == 2
    assert main(["ingest", str(tmp_path / "norepo"), "--out", str(tmp_path / "x")]) == 2


def test_malformed_store_exits_3(workspace, capsys):
    tmp_path, store = workspace
    lines = store.read_text().splitlines()
    lines[4] = lines[4][:-10]
    store.write_text("\n".join(lines) + "\n")
    rc = main(["index", str(store), "--out", str(tmp_path / "index.txt")])
    assert rc == 3
    assert "line 5" in capsys.readouterr().err


def test_search_bm25_stage_matches_library(workspace, fixture_records, manifest):
    tmp_path, store = workspace
    from histsearch.pipeline import PipelineConfig, Query, SearchContext, search_files

    queries_path = tmp_path / "queries.jsonl"
    _write_queries(
        queries_path,
        [{"query_id": "q1", "text": "fix NullPointerException gamma", "timestamp": 2_000_000_000}],
    )
    cfg = _config(tmp_path, store)
    run_path = tmp_path / "run.txt"
    assert main(["search", "--config", str(cfg), "--queries", str(queries_path), "--out", str(run_path), "--stages", "bm25"]) == 0

    ctx = SearchContext.from_records(fixture_records)
    expected = search_files(
        Query("q1", "fix NullPointerException gamma", 2_000_000_000),
        ctx,
        PipelineConfig(bm25_k=50, commit_rerank_depth=20, code_rerank_depth=5),
    )
    got = metrics.read_run(run_path)["q1"]
    assert got == [p for p, _ in expected]


def test_search_constant_scorer_keeps_ranking(workspace):
    tmp_path, store = workspace
    queries_path = tmp_path / "queries.jsonl"
    _write_queries(
        queries_path,
        [{"query_id": "q1", "text": "fix NullPointerException gamma", "timestamp": 2_000_000_000}],
    )
    cfg = _config(tmp_path, store)
    bm25_run = tmp_path / "bm25.txt"
    both_run = tmp_path / "both.txt"
    assert main(["search", "--config", str(cfg), "--queries", str(queries_path), "--out", str(bm25_run), "--stages", "bm25"]) == 0
    assert (
        main(
            [
                "search", "--config", str(cfg), "--queries", str(queries_path), "--out", str(both_run),
                "--stages", "+commit", "--commit-scorer", "constant:0.5",
            ]
        )
        == 0
    )
    assert metrics.read_run(bm25_run) == metrics.read_run(both_run)


def test_search_unknown_stage_exits_2(workspace, capsys):
    tmp_path, store = workspace
    rc = main(
        ["search", "--config", str(_config(tmp_path, store)), "--queries", "q.jsonl", "--out", "r.txt", "--stages", "bogus"]
    )
    assert rc == 2


def test_search_idempotent_with_jobs(workspace):
    tmp_path, store = workspace
    queries_path = tmp_path / "queries.jsonl"
    _write_queries(
        queries_path,
        [
            {"query_id": "q1", "text": "fix NullPointerException gamma", "timestamp": 2_000_000_000},
            {"query_id": "q2", "text": "delta config search", "timestamp": 2_000_000_000},
        ],
    )
    cfg = _config(tmp_path, store, commit_scorer="lexical", code_scorer="lexical")
    r1, r2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
    argv = ["search", "--config", str(cfg), "--queries", str(queries_path), "--stages", "full"]
    assert main(argv + ["--out", str(r1)]) == 0
    assert main(argv + ["--out", str(r2), "--jobs", "4"]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_eval_command(workspace, capsys):
    tmp_path, _ = workspace
    run_path = tmp_path / "run.txt"
    metrics.write_run({"q1": [("a", 2.0), ("x", 1.5), ("b", 1.0)]}, run_path)
    qrels_path = tmp_path / "qrels.txt"
    metrics.write_qrels({"q1": {"a", "b"}}, qrels_path)
    report_path = tmp_path / "report.jsonl"
    figures_dir = tmp_path / "figs"
    rc = main(
        [
            "eval", "--run", str(run_path), "--qrels", str(qrels_path),
            "--out", str(report_path), "--figures", str(figures_dir), "--label", "demo",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "MAP" in out and "demo" in out
    macro = json.loads(report_path.read_text().strip().splitlines()[-1])
    assert macro["MAP"] == pytest.approx(5 / 6)
    assert (figures_dir / "demo_metrics.png").exists()


def test_eval_renders_figure_next_to_report_by_default(workspace):
    tmp_path, _ = workspace
    run_path = tmp_path / "run.txt"
    metrics.write_run({"q1": [("a", 1.0)]}, run_path)
    qrels_path = tmp_path / "qrels.txt"
    metrics.write_qrels({"q1": {"a"}}, qrels_path)
    report_dir = tmp_path / "report"
    report_dir.mkdir()
    report_path = report_dir / "report.jsonl"
    assert main(["eval", "--run", str(run_path), "--qrels", str(qrels_path), "--out", str(report_path)]) == 0
    assert (report_dir / "run_metrics.png").exists()


def test_search_k_flag_overrides_depth(workspace):
    tmp_path, store = workspace
    queries_path = tmp_path / "queries.jsonl"
    _write_queries(
        queries_path,
        [{"query_id": "q1", "text": "fix NullPointerException gamma parser", "timestamp": 2_000_000_000}],
    )
    cfg = _config(tmp_path, store)
    out = tmp_path / "limited.txt"
    assert main(["search", "--config", str(cfg), "--queries", str(queries_path), "--out", str(out), "--stages", "bm25", "--k", "2"]) == 0
    assert all(len(v) <= 2 for v in metrics.read_run(out).values())


def test_eval_standard_map_convention(workspace, capsys):
    tmp_path, _ = workspace
    run_path = tmp_path / "run.txt"
    metrics.write_run({"q1": [("a", 2.0)]}, run_path)
    qrels_path = tmp_path / "qrels.txt"
    metrics.write_qrels({"q1": {"a", "b", "c"}}, qrels_path)
    report_path = tmp_path / "report.jsonl"
    assert main(["eval", "--run", str(run_path), "--qrels", str(qrels_path), "--out", str(report_path), "--map-convention", "standard"]) == 0
    macro = json.loads(report_path.read_text().strip().splitlines()[-1])
    assert macro["MAP"] == pytest.approx(1 / 3)


def test_oracle_command(workspace):
    tmp_path, _ = workspace
    qrels_path = tmp_path / "qrels.txt"
    metrics.write_qrels({"q1": {"a", "b"}, "q2": {"c"}}, qrels_path)
    pool_path = tmp_path / "pool.txt"
    pool_path.write_text("".join(f"d{i}\n" for i in range(50)))
    out_path = tmp_path / "prerank.txt"
    assert main(["oracle", "--qrels", str(qrels_path), "--depth", "20", "--seed", "9", "--distractors", str(pool_path), "--out", str(out_path)]) == 0
    run = metrics.read_run(out_path)
    assert set(run) == {"q1", "q2"}
    assert all(len(r) == 20 for r in run.values())
    assert {"a", "b"}.issubset(run["q1"])
    out2 = tmp_path / "prerank2.txt"
    main(["oracle", "--qrels", str(qrels_path), "--depth", "20", "--seed", "9", "--distractors", str(pool_path), "--out", str(out2)])
    assert out_path.read_bytes() == out2.read_bytes()


def test_triplets_command_both_kinds(workspace, manifest):
    tmp_path, store = workspace
    queries_path = tmp_path / "queries.jsonl"
    last = manifest["records"][-1]
    _write_queries(
        queries_path,
        [
            {
                "query_id": "q1",
                "text": "null pointer exception gamma",
                "timestamp": last["commit_date"],
                "source_commit_id": last["commit_id"],
            }
        ],
    )
    cfg = _config(tmp_path, store)
    commit_out = tmp_path / "commit_triplets.jsonl"
    code_out = tmp_path / "code_triplets.jsonl"
    assert main(["triplets", "--kind", "commit", "--config", str(cfg), "--queries", str(queries_path), "--out", str(commit_out)]) == 0
    assert main(["triplets", "--kind", "code", "--config", str(cfg), "--queries", str(queries_path), "--out", str(code_out)]) == 0
    for path, kind in ((commit_out, "commit_message"), (code_out, "code_patch")):
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert rows, f"{kind} triplets generated"
        assert all(r["kind"] == kind for r in rows)
    rerun = tmp_path / "again.jsonl"
    main(["triplets", "--kind", "commit", "--config", str(cfg), "--queries", str(queries_path), "--out", str(rerun)])
    assert rerun.read_bytes() == commit_out.read_bytes()
