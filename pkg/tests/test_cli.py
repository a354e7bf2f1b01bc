from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from cli_cases import small_cases
from msep import cli
from msep.rng import Rng
from msep.taskgen import TaskParams, sample_zeta

SCHEMA = json.loads(cli.SCHEMA_PATH.read_text())


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("cmd", list(cli.COMMANDS))
def test_reports_validate_against_schema(cmd, tmp_path, capsys):
    code, out, _ = run([cmd, "--seed", "3"] + small_cases(tmp_path)[cmd], capsys)
    assert code == 0
    report = json.loads(out)
    jsonschema.validate(report, SCHEMA)
    assert report["command"] == cmd and report["config"]["seed"] == 3


def test_gen_data_then_learn(tmp_path, capsys):
    path = tmp_path / "d.bin"
    code, out, _ = run(["gen-data", "--n", "16", "--theta", "0.05", "--k", "4096", "--seed", "4",
                        "--out", str(path)], capsys)
    assert code == 0
    gen = json.loads(out)["results"]
    side = json.loads((tmp_path / "d.bin.json").read_text())
    assert side["count"] == 4096 and gen["checks"]["roundtrip_identical"]
    secret = sample_zeta(TaskParams(16, 0.05), Rng(4).child("trial", 0).child("secret"))
    assert side["secret_sha256"] == secret.digest()
    code, out, _ = run(["learn", "--data", str(path), "--test-size", "2000"], capsys)
    res = json.loads(out)["results"]
    assert code == 0 and res["recovered"] == 1
    assert abs(res["per_trial"][0]["risk_l0"] - 0.05) < 0.015


def test_gen_data_digest_stable(tmp_path, capsys):
    digests = []
    for i in range(2):
        run(["gen-data", "--n", "12", "--k", "64", "--seed", "9", "--out",
             str(tmp_path / f"d{i}.bin")], capsys)
        digests.append(json.loads((tmp_path / f"d{i}.bin.json").read_text())["secret_sha256"])
    assert digests[0] == digests[1]
    assert (tmp_path / "d0.bin").read_bytes() == (tmp_path / "d1.bin").read_bytes()


def test_tampered_sidecar_is_io_error(tmp_path, capsys):
    path = tmp_path / "d.bin"
    run(["gen-data", "--n", "12", "--k", "64", "--out", str(path)], capsys)
    side = json.loads((tmp_path / "d.bin.json").read_text())
    side["secret_sha256"] = "0" * 64
    (tmp_path / "d.bin.json").write_text(json.dumps(side))
    code, _, err = run(["learn", "--data", str(path)], capsys)
    assert code == cli.EXIT_IO and "digest" in err


@pytest.mark.parametrize("args,code", [
    (["learn", "--n", "1"], cli.EXIT_CONFIG),
    (["learn", "--theta", "0.7"], cli.EXIT_CONFIG),
    (["learn", "--trials", "0"], cli.EXIT_CONFIG),
    (["learn", "--strict-seed"], cli.EXIT_CONFIG),
    (["gen-data", "--n", "12"], cli.EXIT_CONFIG),
    (["learn", "--data", "/nonexistent/d.bin"], cli.EXIT_IO),
    (["gen-data", "--n", "12", "--k", "8", "--out", "/nonexistent/dir/d.bin"], cli.EXIT_IO),
])
def test_exit_codes(args, code, capsys):
    assert run(args, capsys)[0] == code


def test_check_mode_exit_code(capsys):
    args = ["learn", "--n", "16", "--k", "40", "--test-size", "100"]
    code, out, _ = run(args, capsys)
    assert code == 0 and json.loads(out)["failed_checks"] == ["recovery_rate_ge_0.95"]
    code, out, err = run(args + ["--check"], capsys)
    assert code == cli.EXIT_CHECK and "recovery_rate" in err
    assert json.loads(out)["results"]["recovery_rate"] < 0.95


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('n = 12\nk = 300\nseed = 5\ntest-size = 100\ntrials = 2\n')
    code, out, _ = run(["learn", "--config", str(cfg), "--trials", "1"], capsys)
    resolved = json.loads(out)["config"]
    assert code == 0 and resolved["n"] == 12 and resolved["seed"] == 5
    assert resolved["trials"] == 1 and resolved["test_size"] == 100
    cfg.write_text("bogus = 1\n")
    assert run(["learn", "--config", str(cfg)], capsys)[0] == cli.EXIT_CONFIG
    cfg.write_text("n = = 3\n")
    assert run(["learn", "--config", str(cfg)], capsys)[0] == cli.EXIT_CONFIG


def test_csv_output_and_out_file(tmp_path, capsys):
    dest = tmp_path / "r.csv"
    code, out, _ = run(["ka", "--n", "12", "--k", "100", "--m-sessions", "4", "--key-len", "2",
                        "--format", "csv", "--out", str(dest)], capsys)
    assert code == 0 and out == ""
    rows = list(csv.reader(io.StringIO(dest.read_text())))
    assert rows[0] == ["key", "value"]
    keys = {r[0] for r in rows[1:]}
    assert "results.key_equal_rate" in keys and not any(k.startswith("meta") for k in keys)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "msep.cli", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "msep" in proc.stdout
