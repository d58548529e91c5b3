import random

import pytest

from oracles import ap_oracle, precision_oracle, recall_oracle, rr_oracle

from histsearch.errors import DepthTooSmall, MalformedRun
from histsearch.metrics import (
    average_precision,
    evaluate_run,
    make_oracle_prerank,
    metric_columns,
    precision_at_k,
    read_qrels,
    read_run,
    recall_at_k,
    reciprocal_rank,
    report_jsonl,
    report_table,
    write_qrels,
    write_run,
)


def test_precision_examples():
    assert precision_at_k(["a", "x", "b"], {"a", "b"}, 2) == 0.5
    assert precision_at_k(["a"], {"a"}, 1) == 1.0
    assert precision_at_k([], {"a"}, 5) == 0.0
    # divide by k even when fewer than k retrieved
    assert precision_at_k(["a"], {"a"}, 4) == 0.25


def test_reciprocal_rank_examples():
    assert reciprocal_rank(["a", "b"], {"a"}) == 1.0
    assert reciprocal_rank(["x", "y", "a"], {"a"}) == pytest.approx(1 / 3)
    assert reciprocal_rank(["x", "y"], {"a"}) == 0.0


def test_recall_examples():
    top10 = ["a", "x", "c"] + [f"z{i}" for i in range(7)]
    assert recall_at_k(top10, {"a", "b", "c"}, 10) == pytest.approx(2 / 3)
    assert recall_at_k(["a", "b"], {"a", "b"}, 10) == 1.0
    assert recall_at_k(["x"], {"a"}, 10) == 0.0


def test_average_precision_hand_example():
    assert average_precision(["a", "x", "b"], {"a", "b"}, k=3) == pytest.approx(5 / 6)
    assert average_precision(["a", "b"], {"a", "b"}) == 1.0
    assert average_precision(["x", "y"], {"a"}) == 0.0


def test_average_precision_conventions():
    # one of three relevant retrieved: paper denominator 1, standard 3
    ranking = ["a", "x", "y"]
    relevant = {"a", "b", "c"}
    assert average_precision(ranking, relevant) == 1.0
    assert average_precision(ranking, relevant, denominator="standard") == pytest.approx(1 / 3)


@pytest.mark.parametrize("seed", range(25))
def test_metrics_match_bruteforce(seed):
    rng = random.Random(seed)
    pool = [f"d{i}" for i in range(30)]
    ranking = rng.sample(pool, rng.randint(0, 20))
    relevant = set(rng.sample(pool, rng.randint(1, 8)))
    for k in (1, 3, 10):
        assert precision_at_k(ranking, relevant, k) == pytest.approx(precision_oracle(ranking, relevant, k), abs=1e-12)
        assert recall_at_k(ranking, relevant, k) == pytest.approx(recall_oracle(ranking, relevant, k), abs=1e-12)
    assert reciprocal_rank(ranking, relevant) == pytest.approx(rr_oracle(ranking, relevant), abs=1e-12)
    assert average_precision(ranking, relevant) == pytest.approx(ap_oracle(ranking, relevant), abs=1e-12)
    assert average_precision(ranking, relevant, denominator="standard") == pytest.approx(
        ap_oracle(ranking, relevant, standard=True), abs=1e-12
    )


@pytest.mark.parametrize("seed", range(10))
def test_recall_monotone_and_hits_nondecreasing(seed):
    rng = random.Random(100 + seed)
    pool = [f"d{i}" for i in range(30)]
    ranking = rng.sample(pool, 20)
    relevant = set(rng.sample(pool, 6))
    recalls = [recall_at_k(ranking, relevant, k) for k in range(1, 21)]
    assert recalls == sorted(recalls)
    hits = [precision_at_k(ranking, relevant, k) * k for k in range(1, 21)]
    assert all(b - a > -1e-12 for a, b in zip(hits, hits[1:]))
    for k in range(1, 21):
        assert 0.0 <= precision_at_k(ranking, relevant, k) <= 1.0
        assert 0.0 <= recall_at_k(ranking, relevant, k) <= 1.0


def test_evaluate_run_single_query_echoes_ap_example():
    run = {"q1": ["a", "x", "b"]}
    qrels = {"q1": {"a", "b"}}
    report = evaluate_run(run, qrels)
    assert report.per_query["q1"]["MAP"] == pytest.approx(5 / 6)
    assert report.per_query["q1"]["MRR"] == 1.0
    assert report.macro["MAP"] == pytest.approx(5 / 6)
    assert report.query_count == 1


def test_evaluate_run_empty_run_scores_zero():
    report = evaluate_run({}, {"q1": {"a"}, "q2": {"b"}})
    assert all(v == 0.0 for v in report.macro.values())
    assert report.query_count == 2


def test_evaluate_run_macro_average():
    run = {"q1": ["a"], "q2": ["x"]}
    qrels = {"q1": {"a"}, "q2": {"b"}}
    report = evaluate_run(run, qrels)
    assert report.macro["MRR"] == 0.5
    assert report.macro["P@1"] == 0.5


def test_evaluate_run_warns_on_unknown_query(caplog):
    with caplog.at_level("WARNING"):
        evaluate_run({"mystery": ["a"]}, {"q1": {"a"}})
    assert any("mystery" in r.message for r in caplog.records)


def test_oracle_prerank_all_relevant_at_full_depth():
    ranking = make_oracle_prerank(["a", "b", "c"], [], depth=3, seed=1)
    assert sorted(ranking) == ["a", "b", "c"]
    assert precision_at_k(ranking, {"a", "b", "c"}, 1) == 1.0


def test_oracle_prerank_deterministic_per_seed():
    distractors = [f"d{i}" for i in range(200)]
    one = make_oracle_prerank(["a", "b", "c"], distractors, depth=100, seed=42)
    two = make_oracle_prerank(["a", "b", "c"], distractors, depth=100, seed=42)
    other = make_oracle_prerank(["a", "b", "c"], distractors, depth=100, seed=43)
    assert one == two
    assert one != other
    assert len(one) == 100
    assert set(["a", "b", "c"]).issubset(one)


def test_oracle_prerank_errors():
    with pytest.raises(DepthTooSmall):
        make_oracle_prerank(["a", "b"], ["d"], depth=1, seed=0)
    with pytest.raises(ValueError):
        make_oracle_prerank(["a"], [], depth=3, seed=0)


def test_qrels_roundtrip(tmp_path):
    qrels = {"q1": {"a", "b"}, "q2": {"c"}}
    path = tmp_path / "qrels.txt"
    write_qrels(qrels, path)
    assert read_qrels(path) == qrels


def test_run_roundtrip_and_ordering(tmp_path):
    results = {"q1": [("a", 2.0), ("b", 1.0)], "q2": [("c", 9.0)]}
    path = tmp_path / "run.txt"
    write_run(results, path)
    back = read_run(path)
    assert back == {"q1": ["a", "b"], "q2": ["c"]}
    line = path.read_text().splitlines()[0].split()
    assert line[1] == "Q0" and line[3] == "1" and line[5] == "histsearch"


def test_read_run_malformed(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("q1 Q0 a 1 0.5\n")
    with pytest.raises(MalformedRun):
        read_run(path)
    path.write_text("q1 Q0 a one 0.5 tag\n")
    with pytest.raises(MalformedRun):
        read_run(path)
    path.write_text("q1 Q0 a 1 0.5 tag\nq1 Q0 a 2 0.4 tag\n")
    with pytest.raises(MalformedRun):
        read_run(path)


def test_report_rendering():
    report = evaluate_run({"q1": ["a"]}, {"q1": {"a"}})
    table = report_table(report, label="demo")
    assert "MAP" in table and "demo" in table and "queries: 1" in table
    import json

    lines = report_jsonl(report).strip().split("\n")
    assert len(lines) == 2
    macro = json.loads(lines[-1])
    assert macro["macro"] is True and macro["MAP"] == 1.0
    assert metric_columns()[:2] == ["MAP", "MRR"]
