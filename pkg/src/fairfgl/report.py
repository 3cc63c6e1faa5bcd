"""Report files for a run and aggregation across seeds.

A run directory holds:

``rounds.jsonl``
    one JSON object per round, fixed key order, ``schema`` first.
``summary.tsv``
    the best-validation round's test metrics (one header + one row).
``convergence.tsv``
    per-round validation F1 for convergence plots.
``timing.json``
    wall-clock per round; kept apart so the other files are reproducible.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .federation import convergence_summary

SCHEMA = 1
STREAM_FILE = "rounds.jsonl"
SUMMARY_FILE = "summary.tsv"
CONVERGENCE_FILE = "convergence.tsv"
TIMING_FILE = "timing.json"

METRIC_FIELDS = ("accuracy", "overall_f1", "min_f1", "hete_f1", "hete_min_f1")
SUMMARY_FIELDS = (
    ("schema", "strategy", "seed", "best_round")
    + METRIC_FIELDS
    + ("test_nodes", "minority_nodes", "hete_nodes", "hete_min_nodes")
)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return None if math.isnan(x) else x


def _cell(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return repr(x) if isinstance(x, float) else str(x)


def round_record(rep, strategy, seed):
    t = rep.test
    return {
        "schema": SCHEMA,
        "round": rep.round,
        "strategy": strategy,
        "seed": seed,
        "accuracy": _num(t.accuracy),
        "overall_f1": _num(t.overall_f1),
        "min_f1": _num(t.min_f1),
        "hete_f1": _num(t.hete_f1),
        "hete_min_f1": _num(t.hete_min_f1),
        "train_loss": _num(rep.train_loss),
        "val_accuracy": _num(rep.val_accuracy),
        "val_f1": _num(rep.val_f1),
        "uplink_coords": list(rep.uplink_coords),
        "num_clusters": rep.num_clusters,
        "per_class_f1": [_num(v) for v in t.per_class_f1],
        "per_client": [{k: (_num(v) if isinstance(v, float) else v) for k, v in d.items()} for d in rep.per_client],
    }


def format_round(rep, strategy, seed):
    return json.dumps(round_record(rep, strategy, seed), allow_nan=False) + "\n"


class RoundStream:
    """Appends one line per round and flushes, so an interrupted run leaves valid lines."""

    def __init__(self, path, strategy, seed):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.strategy, self.seed = strategy, seed

    def __call__(self, rep):
        self.fh.write(format_round(rep, self.strategy, self.seed))
        self.fh.flush()
        os.fsync(self.fh.fileno())

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def summary_row(run):
    b = run.best_metrics
    c = run.group_counts
    return [
        SCHEMA, run.strategy, run.seed, run.best_round,
        b.accuracy, b.overall_f1, b.min_f1, b.hete_f1, b.hete_min_f1,
        c["test"], c["minority"], c["heterophilous"], c["hete-min"],
    ]


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_summary(run, directory):
    lines = ["\t".join(SUMMARY_FIELDS), "\t".join(_cell(v) for v in summary_row(run))]
    _write(os.path.join(directory, SUMMARY_FILE), "\n".join(lines) + "\n")
    rows = [f"# schema={SCHEMA}", "round\tval_f1\tval_accuracy"]
    rows += [f"{r.round}\t{_cell(r.val_f1)}\t{_cell(r.val_accuracy)}" for r in run.rounds]
    _write(os.path.join(directory, CONVERGENCE_FILE), "\n".join(rows) + "\n")
    _write(os.path.join(directory, TIMING_FILE), json.dumps({"wall_clock_s": run.wall_clock}) + "\n")


def emit_report(run, directory):
    """Write every report file for ``run`` into ``directory``; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    stream = "".join(format_round(r, run.strategy, run.seed) for r in run.rounds)
    _write(os.path.join(directory, STREAM_FILE), stream)
    write_summary(run, directory)
    return [os.path.join(directory, f) for f in (STREAM_FILE, SUMMARY_FILE, CONVERGENCE_FILE, TIMING_FILE)]


def read_summary(path):
    with open(path, encoding="utf-8") as fh:
        header, row = [line.rstrip("\n").split("\t") for line in fh if line.strip()][:2]
    out = dict(zip(header, row))
    for k in METRIC_FIELDS:
        out[k] = float("nan") if out[k] == "NA" else float(out[k])
    return out


def read_val_trace(path):
    trace = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("round"):
                continue
            parts = line.split("\t")
            trace.append(float("nan") if parts[1] == "NA" else float(parts[1]))
    return trace


def mean_std(values):
    """``"mean(std)"`` with population std, 2 decimals; undefined values are skipped."""
    v = np.array([x for x in values if not math.isnan(x)], dtype=np.float64)
    if v.size == 0:
        return "NA"
    return f"{v.mean():.2f}({v.std():.2f})"


def aggregate_runs(summaries):
    """One row per strategy: ``{strategy: {metric: "mean(std)", "seeds": n}}``."""
    by = {}
    for s in summaries:
        by.setdefault(s["strategy"], []).append(s)
    table = {}
    for strategy in sorted(by):
        rows = by[strategy]
        entry = {m: mean_std([r[m] for r in rows]) for m in METRIC_FIELDS}
        entry["seeds"] = len(rows)
        table[strategy] = entry
    return table


def format_table(table):
    header = ["strategy", "seeds"] + list(METRIC_FIELDS)
    lines = [f"# schema={SCHEMA}", "\t".join(header)]
    for strategy, entry in table.items():
        lines.append("\t".join([strategy, str(entry["seeds"])] + [entry[m] for m in METRIC_FIELDS]))
    return "\n".join(lines) + "\n"


def convergence_rows(traces, target=0.9):
    """``(strategy, seed, rounds-to-target)`` per run."""
    return [(s, seed, convergence_summary(t, target)) for (s, seed), t in sorted(traces.items())]
