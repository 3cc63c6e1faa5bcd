"""``fairfgl`` command line: gen, partition, train, report.

Exit codes: 0 success, 1 runtime error, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import SCHEMA, load_config
from .datasets import generate_sbm, graph_stats, load_graph, save_graph
from .exceptions import ConfigError, FairFGLError
from .federation import Federation
from .graph import edge_cut
from .partition import (
    load_assignment,
    partition_fennel,
    partition_label_skew,
    save_assignment,
    split_graph,
)
from .report import (
    CONVERGENCE_FILE,
    STREAM_FILE,
    SUMMARY_FILE,
    RoundStream,
    aggregate_runs,
    convergence_rows,
    format_table,
    read_summary,
    read_val_trace,
    write_summary,
)

log = logging.getLogger("fairfgl")

# (section, key) -> flag name, where the plain key name would be ambiguous
FLAG_NAMES = {
    ("data", "seed"): "--data-seed",
    ("data", "path"): "--graph",
    ("partition", "seed"): "--partition-seed",
    ("partition", "path"): "--assignment",
    ("server", "seed"): "--server-seed",
    ("output", "dir"): "--out",
}


def _flag(section, key):
    return FLAG_NAMES.get((section, key), "--" + key.replace("_", "-"))


def _fmt_default(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if v is None:
        return "auto"
    return str(v)


def _common_parser():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("-c", "--config", help="INI config file (flags override it)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    for section, keys in SCHEMA.items():
        grp = p.add_argument_group(f"[{section}]")
        for key, (_, default, text) in keys.items():
            grp.add_argument(
                _flag(section, key),
                dest=f"{section}.{key}",
                default=None,
                metavar="V",
                help=f"{text} (default: {_fmt_default(default)})",
            )
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="fairfgl", description="Fairness-aware federated graph learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    sub.add_parser("gen", parents=[common], help="generate an SBM graph in canonical format")
    sub.add_parser("partition", parents=[common], help="split the graph into client parts")
    sub.add_parser("train", parents=[common], help="run federated training for every strategy and seed")
    sub.add_parser("report", parents=[common], help="aggregate finished runs across seeds")
    return parser


def _config_from_args(args):
    overrides = {}
    for section, keys in SCHEMA.items():
        for key in keys:
            overrides[(section, key)] = getattr(args, f"{section}.{key}")
    return load_config(args.config, overrides).validate()


def _get_graph(cfg):
    path = cfg.graph_path()
    if os.path.exists(path):
        return load_graph(path)
    if cfg["data"]["source"] == "sbm":
        log.info("no graph at %s; generating the configured SBM inline", path)
        return generate_sbm(cfg.sbm_config())
    raise ConfigError(f"graph file not found: {path}")


def _partition(cfg, g):
    p = cfg["partition"]
    if p["method"] == "fennel":
        return partition_fennel(g, p["n_parts"], p["balance_gamma"])
    return partition_label_skew(g, p["n_parts"], p["alpha"], p["seed"])


def cmd_gen(cfg):
    if cfg["data"]["source"] != "sbm":
        raise ConfigError("gen requires data.source=sbm")
    g = generate_sbm(cfg.sbm_config())
    path = cfg.graph_path()
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_graph(g, path)
    s = graph_stats(g)
    print(f"n={s['n']} m={s['m']} f={s['f']} C={s['C']} class_counts={s['class_counts']} -> {path}")
    return 0


def cmd_partition(cfg):
    if cfg["partition"]["n_parts"] < 2:
        raise ConfigError("partition needs n_parts >= 2 (single-client runs use train with n_parts=1)")
    g = _get_graph(cfg)
    a = _partition(cfg, g)
    path = cfg.assignment_path()
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_assignment(a, path)
    hist = a.class_histogram(g)
    print("part\tsize\t" + "\t".join(f"class_{c}" for c in range(g.num_classes)))
    for i, row in enumerate(hist):
        print(f"{i}\t{row.sum()}\t" + "\t".join(str(v) for v in row))
    print(f"edge_cut={edge_cut(g, a.part_of)} -> {path}")
    return 0


def _client_graphs(cfg, g):
    if cfg["partition"]["n_parts"] == 1:
        return [g]
    path = cfg.assignment_path()
    a = load_assignment(path) if os.path.exists(path) else _partition(cfg, g)
    if a.part_of.size != g.num_nodes:
        raise ConfigError(f"assignment {path} covers {a.part_of.size} nodes, graph has {g.num_nodes}")
    return split_graph(g, a)


def run_dir(cfg, strategy, seed):
    return os.path.join(cfg.out_dir, strategy, f"seed_{seed}")


def cmd_train(cfg):
    g = _get_graph(cfg)
    clients = _client_graphs(cfg, g)
    runs = [(s, seed) for s in cfg["run"]["strategies"] for seed in cfg["run"]["seeds"]]
    # build all run configs before writing anything
    run_cfgs = {(s, seed): cfg.run_config(s, seed) for s, seed in runs}
    for (strategy, seed), rc in run_cfgs.items():
        fed = Federation(clients, rc)
        d = run_dir(cfg, strategy, seed)
        os.makedirs(d, exist_ok=True)
        with RoundStream(os.path.join(d, STREAM_FILE), strategy, seed) as stream:
            run = fed.run(callback=stream)
        write_summary(run, d)
        b = run.best_metrics
        print(
            f"{strategy}\tseed={seed}\tbest_round={run.best_round}\toverall_f1={b.overall_f1:.4f}"
            f"\thete_min_f1={b.hete_min_f1:.4f}\t-> {d}"
        )
    return 0


def cmd_report(cfg, target=0.9):
    expected = [(s, seed) for s in cfg["run"]["strategies"] for seed in cfg["run"]["seeds"]]
    missing = [
        os.path.join(run_dir(cfg, s, seed), SUMMARY_FILE)
        for s, seed in expected
        if not os.path.exists(os.path.join(run_dir(cfg, s, seed), SUMMARY_FILE))
    ]
    if missing:
        raise FairFGLError("missing run outputs:\n  " + "\n  ".join(missing))
    summaries = [read_summary(os.path.join(run_dir(cfg, s, seed), SUMMARY_FILE)) for s, seed in expected]
    table = format_table(aggregate_runs(summaries))
    traces = {(s, seed): read_val_trace(os.path.join(run_dir(cfg, s, seed), CONVERGENCE_FILE)) for s, seed in expected}
    conv = "strategy\tseed\trounds_to_90pct\n" + "".join(f"{s}\t{seed}\t{r}\n" for s, seed, r in convergence_rows(traces, target))
    with open(os.path.join(cfg.out_dir, "report_summary.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table)
    with open(os.path.join(cfg.out_dir, "report_convergence.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(conv)
    sys.stdout.write(table)
    sys.stdout.write(conv)
    return 0


COMMANDS = {"gen": cmd_gen, "partition": cmd_partition, "train": cmd_train, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"fairfgl: error: {exc}", file=sys.stderr)
        return 2
    except (FairFGLError, OSError, ValueError) as exc:
        print(f"fairfgl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
