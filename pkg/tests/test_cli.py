import json

import pytest

from dlegion import cli
from dlegion.config import ArchConfig, ModelConfig, dumps
from dlegion.metrics import parse

TINY = ModelConfig(layers=2, hidden_size=64, num_heads=4, num_kv_heads=2, head_dim=16, seq_len=32,
                   name="tiny")
ARCH = ArchConfig(2, 2, 4, name="mini")


@pytest.fixture
def cfg(tmp_path):
    (tmp_path / "tiny.json").write_text(dumps(TINY))
    (tmp_path / "mini.json").write_text(dumps(ARCH))
    return tmp_path


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_workloads_preset(capsys):
    code, out, _ = run(["workloads", "--preset", "bitnet-1.58b", "--format", "json"], capsys)
    rows = json.loads(out)
    assert code == 0 and len(rows) == 7 and rows[-1]["stage"] == "total"
    assert rows[-1]["ops"] == sum(r["ops"] for r in rows[:-1])
    assert rows[0]["count"] == 32 * 16


def test_dse_ranking(capsys):
    code, out, _ = run(["dse", "--format", "json"], capsys)
    assert code == 0
    assert [r["config"] for r in json.loads(out)][0] == "8x16x16"


def test_dse_needs_two(tmp_path, capsys):
    grid = tmp_path / "g.json"
    grid.write_text("[[8, 16]]")
    code, _, err = run(["dse", "--grid", str(grid)], capsys)
    assert code == 2 and ">=2 candidates required" in err


def test_simulate_functional(cfg, capsys):
    out = cfg / "r.json"
    code, text, _ = run(["simulate", "--arch", str(cfg / "mini.json"), "--model", str(cfg / "tiny.json"),
                         "--functional", "--out", str(out)], capsys)
    assert code == 0 and "functional: PASS" in text
    rep = parse(out.read_text())
    assert rep.total.cycles > 0 and rep.manifest.subcommand == "simulate"


def test_simulate_deterministic_bytes(cfg, capsys):
    args = ["simulate", "--arch", str(cfg / "mini.json"), "--model", str(cfg / "tiny.json"), "--format", "csv"]
    assert run(args, capsys)[1] == run(args, capsys)[1]


def test_env_config_dir(cfg, capsys, monkeypatch):
    monkeypatch.setenv("DLEGION_CONFIG_DIR", str(cfg))
    code, text, _ = run(["simulate", "--arch", "mini", "--model", "tiny"], capsys)
    assert code == 0 and json.loads(text)["arch"] == "mini"


def test_ztb_round_trip_and_mismatch(cfg, capsys):
    book = cfg / "q.ztb"
    code, _, _ = run(["ztb-gen", "--arch", str(cfg / "mini.json"), "--model", str(cfg / "tiny.json"),
                      "--rate", "0.5", "--out", str(book)], capsys)
    assert code == 0
    code, text, _ = run(["simulate", "--arch", str(cfg / "mini.json"), "--model", str(cfg / "tiny.json"),
                         "--ztb", str(book), "--functional"], capsys)
    assert code == 0 and "skipped windows" in text and "functional: PASS" in text
    other = ArchConfig(2, 4, 4, name="other")
    (cfg / "other.json").write_text(dumps(other))
    code, _, err = run(["simulate", "--arch", str(cfg / "other.json"), "--model", str(cfg / "tiny.json"),
                        "--ztb", str(book)], capsys)
    assert code == 3 and "expected" in err


def test_corrupt_ztb(cfg, capsys):
    bad = cfg / "bad.ztb"
    bad.write_bytes(b"nope")
    code, _, _ = run(["simulate", "--arch", str(cfg / "mini.json"), "--model", str(cfg / "tiny.json"),
                      "--ztb", str(bad)], capsys)
    assert code == 3


def test_config_errors(cfg, capsys):
    assert run(["simulate", "--arch", "nope", "--model", "tiny"], capsys)[0] == 2
    assert run(["compare", "--model", str(cfg / "tiny.json"), "--archs", ""], capsys)[0] == 2
    bad = cfg / "bad.json"
    bad.write_text(json.dumps({**json.loads(dumps(TINY)), "num_kv_heads": 3}))
    code, _, err = run(["workloads", "--model", str(bad)], capsys)
    assert code == 2 and "H mod G" in err


def test_compare_writes_tables(cfg, capsys, tmp_path):
    out = tmp_path / "cmp"
    code, text, _ = run(["compare", "--model", str(cfg / "tiny.json"),
                         "--archs", f"ws-64,adip-64,{cfg / 'mini.json'}", "--out", str(out)], capsys)
    assert code == 0 and "ratios" in text
    assert {p.name for p in out.iterdir()} >= {"ratios.csv", "cycles.csv", "mini.json"}
