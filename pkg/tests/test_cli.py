import os

import pytest

from fairfgl.cli import build_parser, main
from fairfgl.config import load_config
from fairfgl.exceptions import ConfigError

SMALL = ["--block-sizes", "30,15,15", "--feature-dim", "6", "--p-in", "0.2", "--p-out", "0.03"]


def out(tmp_path):
    return ["--out", str(tmp_path)]


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    text = text[text.index("options:"):]
    for flag, default in [
        ("--topk-ratio", "0.4"), ("--margin", "0.1"), ("--tau-h", "0.5"), ("--lambda-distill", "1.0"),
        ("--lambda-struct", "1.0"), ("--lr", "0.05"), ("--hidden", "64"), ("--rounds", "150"), ("--local-epochs", "3"),
    ]:
        assert flag in text
        seg = text[text.index(flag + " V "):]
        assert f"(default: {default})" in seg[: seg.index(")") + 1]


def test_gen_writes_file_and_prints_counts(tmp_path, capsys):
    args = ["gen", "--block-sizes", "200,50,50", "--data-seed", "7"] + out(tmp_path)
    assert main(args) == 0
    printed = capsys.readouterr().out
    assert "n=300" in printed and "class_counts=[200, 50, 50]" in printed
    first = (tmp_path / "graph.txt").read_bytes()
    assert main(args) == 0
    assert (tmp_path / "graph.txt").read_bytes() == first


def test_invalid_values_exit_2_without_output(tmp_path, capsys):
    assert main(["gen", "--p-in", "-1"] + out(tmp_path)) == 2
    assert "p_in" in capsys.readouterr().err
    assert main(["gen", "--rounds", "many"] + out(tmp_path)) == 2
    assert main(["train", "--strategies", "fedsgd"] + out(tmp_path)) == 2
    assert os.listdir(tmp_path) == []


def test_partition_histogram_and_rejections(tmp_path, capsys):
    assert main(["partition", "--n-parts", "4", "--block-sizes", "40,40,40,40", "--feature-dim", "4"] + out(tmp_path)) == 0
    lines = capsys.readouterr().out.splitlines()
    rows = [l.split("\t") for l in lines[1:5]]
    assert all(int(r[1]) == sum(int(v) for v in r[2:]) > 0 for r in rows)
    assert sum(int(r[1]) for r in rows) == 160
    assert main(["partition", "--n-parts", "1"] + out(tmp_path / "x")) == 2


def test_train_creates_a_directory_per_strategy_and_seed(tmp_path, capsys):
    args = ["train", "--strategies", "fedavg,fairfgl", "--seeds", "0,1,2", "--rounds", "2", "--hidden", "4"] + SMALL + out(tmp_path)
    assert main(args) == 0
    for s in ("fedavg", "fairfgl"):
        for seed in range(3):
            d = tmp_path / s / f"seed_{seed}"
            assert (d / "rounds.jsonl").read_text().count("\n") == 2
            assert (d / "summary.tsv").exists()
    assert main(["report", "--strategies", "fedavg,fairfgl", "--seeds", "0,1,2"] + out(tmp_path)) == 0
    table = (tmp_path / "report_summary.tsv").read_text().splitlines()
    assert [l.split("\t")[0] for l in table[2:]] == ["fairfgl", "fedavg"]
    assert "rounds_to_90pct" in (tmp_path / "report_convergence.tsv").read_text()


def test_report_lists_missing_runs(tmp_path, capsys):
    assert main(["report", "--strategies", "fedavg", "--seeds", "0,1"] + out(tmp_path)) == 1
    err = capsys.readouterr().err
    assert "seed_0" in err and "seed_1" in err


def test_config_file_and_precedence(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text("[run]\nrounds = 7\nlr = 0.2\n[output]\ndir = from_file\n")
    cfg = load_config(ini, {("run", "lr"): "0.3"}, env={"FAIRFGL_OUTPUT_ROOT": "from_env"})
    assert cfg["run"]["rounds"] == 7 and cfg["run"]["lr"] == 0.3 and cfg.out_dir == "from_env"
    cfg = load_config(ini, {("output", "dir"): "from_flag"}, env={"FAIRFGL_OUTPUT_ROOT": "from_env"})
    assert cfg.out_dir == "from_flag"


def test_unknown_config_key_rejected(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\nround = 7\n")
    with pytest.raises(ConfigError, match="round"):
        load_config(ini)
    assert main(["train", "-c", str(ini)] + out(tmp_path / "o")) == 2
    ini.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(ini)


def test_parser_has_all_subcommands():
    p = build_parser()
    for cmd in ("gen", "partition", "train", "report"):
        assert p.parse_args([cmd]).command == cmd
