import json
import subprocess
import sys

import pytest

from balanceroute.workbench.cli import main, parse_axes
from balanceroute.workbench.traces import load_trace

SMALL = ["--G", "2", "--B", "3", "--count", "60", "--rho", "0.8"]


def last_json(text):
    """The last top-level JSON document in CLI output."""
    start = text.rstrip().rfind("\n{")
    return json.loads(text[start + 1 if start >= 0 else 0:])


def test_gen_trace_then_run(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    assert main(["gen-trace", "--profile", "heavy", "--count", "50", "--G", "2", "--B", "3",
                 "--out", str(trace)]) == 0
    assert len(load_trace(trace)) == 50
    capsys.readouterr()
    out = tmp_path / "res"
    assert main(["run", "--trace", str(trace), "--router", "brh", "--G", "2", "--B", "3", "--H", "8",
                 "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert '"resolved_config"' in printed
    doc = json.loads((out / "summary.json").read_text())
    assert doc["config"]["run"]["router"] == "brh" and doc["config"]["run"]["H"] == 8
    assert doc["summary"]["completions"] == 50
    assert (out / "steps.csv").read_text().startswith("k,load_0,load_1,imbalance_total")


def test_run_is_byte_stable(tmp_path):
    for name in ("a", "b"):
        assert main(["run", "--profile", "azure", *SMALL, "--router", "p2c", "--out", str(tmp_path / name)]) == 0
    for f in ("summary.json", "steps.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"router": "jsq", "G": 2, "B": 3, "profile": "heavy", "count": 40, "beta": 7}))
    assert main(["run", "--config", str(cfg), "--router", "rr"]) == 0
    text = capsys.readouterr().out
    resolved = json.loads(text[:text.index("\n}\n") + 2])["resolved_config"]
    assert resolved["run"]["router"] == "rr"
    assert resolved["run"]["beta"] == 7
    assert resolved["workload"]["count"] == 40


def test_sweep_verb(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--profile", "heavy", *SMALL, "--router", "brh", "--H", "8",
                 "--axis", "beta=1,24,48,96", "--axis", "gamma=0.5,0.7,0.9,1.0", "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 7
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["config"]["axes"]["beta"] == [1, 24, 48, 96]


def test_sweep_cell_failure_gives_nonzero_exit(tmp_path, capsys):
    assert main(["sweep", "--profile", "heavy", *SMALL, "--axis", "r_max=0,2"]) == 1
    assert "failed" in capsys.readouterr().err


def test_convert_azure(tmp_path):
    src = tmp_path / "a.csv"
    src.write_text("TIMESTAMP,ContextTokens,GeneratedTokens\n"
                   "2024-05-10 00:00:00.000+00:00,10,1500\n"
                   "2024-05-10 00:00:01.000+00:00,10,20\n")
    dst = tmp_path / "a.jsonl"
    assert main(["convert-azure", "--trace", str(src), "--out", str(dst)]) == 0
    assert [(r.id, r.output_len) for r in load_trace(dst)] == [(0, 1500)]
    assert main(["convert-azure", "--trace", str(src), "--out", str(dst), "--filter-output-gt", "none"]) == 0
    assert [r.arrival_step for r in load_trace(dst)] == [0, 16]


@pytest.mark.parametrize("argv", [
    ["run"],
    ["run", "--trace", "/nonexistent/file.jsonl"],
    ["run", "--profile", "heavy", "--G", "0"],
    ["run", "--profile", "heavy", "--r-max", "0"],
    ["sweep", "--profile", "heavy", "--axis", "bogus"],
    ["gen-trace", "--out", "x.jsonl"],
])
def test_errors_exit_nonzero(argv, capsys):
    assert main(argv) != 0
    assert "error" in capsys.readouterr().err


def test_bad_line_reported(tmp_path, capsys):
    p = tmp_path / "t.jsonl"
    p.write_text('{"id": 0, "arrival": 0, "prompt_tokens": 5, "output_tokens": 0}\n')
    assert main(["run", "--trace", str(p)]) == 2
    assert ":1:" in capsys.readouterr().err


def test_parse_axes():
    assert parse_axes(["beta=1,2.5", "router=br0,brh", "s-greedy=none,4"]) == {
        "beta": [1, 2.5], "router": ["br0", "brh"], "s_greedy": [None, 4]}


def test_module_entry_point(tmp_path):
    out = tmp_path / "t.jsonl"
    proc = subprocess.run([sys.executable, "-m", "balanceroute", "gen-trace", "--profile", "azure",
                           "--count", "5", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    bad = subprocess.run([sys.executable, "-m", "balanceroute", "run"], capture_output=True, text=True)
    assert bad.returncode != 0 and "error" in bad.stderr
