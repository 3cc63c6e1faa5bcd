import json

import numpy as np
import pytest

from fairfgl.federation import Federation, RunConfig, run_federation
from fairfgl.partition import partition_fennel, split_graph
from fairfgl.report import (
    CONVERGENCE_FILE,
    STREAM_FILE,
    SUMMARY_FILE,
    RoundStream,
    aggregate_runs,
    emit_report,
    format_table,
    mean_std,
    read_summary,
    read_val_trace,
)


@pytest.fixture(scope="module")
def clients(sbm_graph):
    return split_graph(sbm_graph, partition_fennel(sbm_graph, 3))


@pytest.fixture(scope="module")
def run(clients):
    return run_federation(clients, RunConfig("fairfgl", rounds=6, hidden=8))


def test_stream_cardinality_and_schema(run, tmp_path):
    emit_report(run, tmp_path)
    lines = (tmp_path / STREAM_FILE).read_text().splitlines()
    assert len(lines) == 6
    recs = [json.loads(l) for l in lines]
    assert [r["round"] for r in recs] == list(range(6))
    assert list(recs[0])[:4] == ["schema", "round", "strategy", "seed"] and recs[0]["schema"] == 1
    summary = (tmp_path / SUMMARY_FILE).read_text().splitlines()
    assert len(summary) == 2
    assert len(read_val_trace(tmp_path / CONVERGENCE_FILE)) == 6


def test_reemit_is_byte_identical(run, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    emit_report(run, a)
    emit_report(run, b)
    for name in (STREAM_FILE, SUMMARY_FILE, CONVERGENCE_FILE):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_summary_roundtrip(run, tmp_path):
    emit_report(run, tmp_path)
    s = read_summary(tmp_path / SUMMARY_FILE)
    assert s["strategy"] == "fairfgl" and int(s["best_round"]) == run.best_round
    assert s["overall_f1"] == run.best_metrics.overall_f1


def test_tag_counts_same_across_strategies(clients, run, tmp_path):
    other = run_federation(clients, RunConfig("fedavg", rounds=2, hidden=8))
    emit_report(run, tmp_path / "x")
    emit_report(other, tmp_path / "y")
    cols = ("test_nodes", "minority_nodes", "hete_nodes", "hete_min_nodes")
    a, b = read_summary(tmp_path / "x" / SUMMARY_FILE), read_summary(tmp_path / "y" / SUMMARY_FILE)
    assert [a[c] for c in cols] == [b[c] for c in cols]


def test_interrupted_stream_has_only_complete_lines(clients, tmp_path):
    path = tmp_path / STREAM_FILE
    fed = Federation(clients, RunConfig("fedavg", rounds=5, hidden=8))

    class Stop(Exception):
        pass

    with RoundStream(path, "fedavg", 0) as stream:
        def cb(rep):
            stream(rep)
            if rep.round == 2:
                raise Stop

        with pytest.raises(Stop):
            fed.run(callback=cb)
    lines = path.read_text().splitlines()
    assert len(lines) == 3 and all(json.loads(l)["strategy"] == "fedavg" for l in lines)


def test_mean_std_examples():
    assert mean_std([0.50, 0.52, 0.54]) == "0.52(0.02)"
    assert mean_std([0.7]) == "0.70(0.00)"
    assert mean_std([float("nan"), 0.4]) == "0.40(0.00)"
    assert mean_std([float("nan")]) == "NA"


def test_aggregate_one_row_per_strategy():
    rows = [
        {"strategy": s, "accuracy": a, "overall_f1": a, "min_f1": a, "hete_f1": a, "hete_min_f1": float("nan")}
        for s, a in [("fedavg", 0.5), ("fairfgl", 0.6), ("fedavg", 0.7)]
    ]
    table = aggregate_runs(rows)
    assert list(table) == ["fairfgl", "fedavg"]
    assert table["fedavg"]["accuracy"] == "0.60(0.10)" and table["fedavg"]["seeds"] == 2
    text = format_table(table)
    assert text.startswith("# schema=1\n") and text.count("\n") == 4
    assert "NA" in text


def test_nan_metrics_serialise_as_null(run):
    from fairfgl.report import format_round

    rep = run.rounds[0]
    rep2 = type(rep)(**{**rep.__dict__, "train_loss": float("nan")})
    assert json.loads(format_round(rep2, "fairfgl", 0))["train_loss"] is None
    assert np.isfinite(json.loads(format_round(rep, "fairfgl", 0))["train_loss"])
