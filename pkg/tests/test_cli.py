"""CLI subcommands, exit codes, and byte-level determinism."""

import json

import pytest

from camech.cli import main
from camech.serialize import load_instance

TWO_BY_TWO = {
    "m": 2,
    "bidders": [
        {"kind": "additive", "values": [3, 1]},
        {"kind": "additive", "values": [2, 2]},
    ],
}


@pytest.fixture
def inst_path(tmp_path):
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(TWO_BY_TWO))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_gen_writes_a_loadable_instance(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "xos", "n": 2, "m": 3}))
    out = tmp_path / "gen.json"
    code, stdout, _ = run_cli(capsys, "gen", "--spec", str(spec), "--seed", "7", "--out", str(out))
    assert code == 0
    inst = load_instance(str(out))
    assert inst.n == 2 and inst.m == 3
    # Regenerating with the same seed produces the identical file.
    out2 = tmp_path / "gen2.json"
    run_cli(capsys, "gen", "--spec", str(spec), "--seed", "7", "--out", str(out2))
    assert out.read_text() == out2.read_text()


def test_opt_prints_welfare_five(inst_path, capsys):
    code, stdout, _ = run_cli(capsys, "opt", "--instance", inst_path)
    assert code == 0
    data = json.loads(stdout)
    assert data["welfare"] == 5.0
    assert data["allocation"] == [1, 2]


def test_run_is_byte_deterministic(inst_path, capsys):
    args = ["run", "--instance", inst_path, "--mechanism", "binary-search", "--seed", "11"]
    code1, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2


def test_run_replay_round_trip(inst_path, tmp_path, capsys):
    t_path = str(tmp_path / "t.json")
    code, out_run, _ = run_cli(
        capsys, "run", "--instance", inst_path, "--mechanism", "final",
        "--seed", "5", "--transcript", t_path,
    )
    assert code == 0
    code, out_replay, _ = run_cli(capsys, "replay", "--transcript", t_path, "--instance", inst_path)
    assert code == 0
    assert out_run == out_replay


def test_replay_against_wrong_instance_fails(inst_path, tmp_path, capsys):
    t_path = str(tmp_path / "t.json")
    run_cli(capsys, "run", "--instance", inst_path, "--mechanism", "final",
            "--seed", "5", "--transcript", t_path)
    other = tmp_path / "other.json"
    other.write_text(json.dumps({
        "m": 2,
        "bidders": [
            {"kind": "additive", "values": [7, 7]},
            {"kind": "additive", "values": [2, 2]},
        ],
    }))
    code, _, err = run_cli(capsys, "replay", "--transcript", t_path, "--instance", str(other))
    assert code == 1
    assert "replay" in err or "transcript" in err


def test_run_fpa_fixed_with_prices(inst_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "run", "--instance", inst_path, "--mechanism", "fpa-fixed",
        "--seed", "1", "--prices", "2,1",
    )
    assert code == 0
    data = json.loads(stdout)
    assert data["allocation"] == [1, 2]
    assert data["welfare"] == 5.0
    assert data["revenue"] == 3.0


def test_verify_accepts_good_instance(inst_path, capsys):
    code, stdout, _ = run_cli(capsys, "verify", "--instance", inst_path)
    assert code == 0
    assert "ok" in stdout


def test_verify_names_the_violating_pair(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "m": 2,
        "bidders": [{
            "kind": "explicit",
            "table": {"0": 0, "1": 1, "2": 1, "3": 3},
            "subadditive": True,
        }],
    }))
    code, stdout, _ = run_cli(capsys, "verify", "--instance", str(bad))
    assert code == 3
    assert "0b1" in stdout and "0b10" in stdout


def test_truthfulness_command(inst_path, capsys):
    code, stdout, _ = run_cli(
        capsys, "truthfulness", "--instance", inst_path, "--seeds", "4", "--seed", "2",
    )
    assert code == 0
    assert "no profitable deviation" in stdout


def test_experiment_outputs_are_deterministic(inst_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "mechanism": "final",
        "trials": 15,
        "base_seed": 3,
        "instances": [
            {"id": "a", "path": "inst.json"},
            {"id": "b", "generator": {"kind": "xos", "n": 2, "m": 3}, "seed": 6},
        ],
    }))
    csv1, csv2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    code1, out1, _ = run_cli(capsys, "experiment", "--config", str(cfg), "--out", str(csv1))
    code2, out2, _ = run_cli(capsys, "experiment", "--config", str(cfg), "--out", str(csv2))
    assert code1 == code2 == 0
    assert out1 == out2
    assert csv1.read_bytes() == csv2.read_bytes()
    assert csv1.read_text().splitlines()[0].startswith("instance_id,")


def test_malformed_json_exits_one(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text("{oops")
    code, _, err = run_cli(capsys, "opt", "--instance", str(broken))
    assert code == 1
    assert "not valid JSON" in err


def test_bad_field_named_in_diagnostic(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"m": 2, "bidders": [{"kind": "additive", "values": [1, "x"]}]}))
    code, _, err = run_cli(capsys, "opt", "--instance", str(bad))
    assert code == 1
    assert "bidders[0].values[1]" in err


def test_capability_error_exits_two(tmp_path, capsys):
    big = tmp_path / "big.json"
    big.write_text(json.dumps({
        "m": 16,
        "bidders": [{"kind": "additive", "values": [1] * 16}],
    }))
    code, _, err = run_cli(capsys, "opt", "--instance", str(big))
    assert code == 2
    assert "capability" in err
