"""Tests for the command-line interface."""

import json

import pytest
from click.testing import CliRunner

from setspace import __version__
from setspace.cli import cli
from setspace.database import Database


@pytest.fixture
def invoke(tmp_path):
    runner = CliRunner()
    db_path = tmp_path / "ledger.db"

    def _invoke(*args):
        return runner.invoke(cli, ["--db", str(db_path), *args], catch_exceptions=False)

    _invoke.db = lambda: Database(db_path)
    _invoke.out = tmp_path / "out"
    return _invoke


def test_version():
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_bounds_json(invoke):
    result = invoke("bounds", "--n", "6", "--m", "2", "--k", "3", "--json")
    assert result.exit_code == 0
    (row,) = json.loads(result.output)
    assert row["repeated_lower"] == 5
    assert row["repeated_upper"] == 6
    assert row["c"] == 2
    assert row["glue_registers"] == 2
    assert row["glue_processes"] == 6


def test_bounds_table_and_sweep(invoke):
    assert invoke("bounds", "--n", "5", "--m", "1", "--k", "1").exit_code == 0
    result = invoke("bounds", "--sweep", "3-4", "--json")
    assert len(json.loads(result.output)) == 9


@pytest.mark.parametrize("args", [["--n", "3", "--m", "2", "--k", "1"], ["--n", "3"], ["--sweep", "x-4"]])
def test_bounds_bad_input(invoke, args):
    assert invoke("bounds", *args).exit_code == 2


def test_run_suite(invoke, write_config):
    path = write_config()
    result = invoke("run", "--config", str(path), "--out", str(invoke.out), "--trace")
    assert result.exit_code == 0
    assert (invoke.out / "summary.csv").exists()
    assert (invoke.out / "traces.jsonl").exists()
    (experiment,) = invoke.db().list_experiments()
    assert experiment["command"] == "run"
    assert experiment["outcome"] == "ok"
    assert invoke.db().get_stats()["reports"] > 0


def test_run_out_from_environment(tmp_path, write_config):
    path = write_config(suite={"kind": "round-robin", "count": 1, "step_cap": 200})
    out = tmp_path / "env-out"
    result = CliRunner().invoke(
        cli, ["--db", str(tmp_path / "l.db"), "run", "--config", str(path)], env={"SETSPACE_OUT": str(out)}
    )
    assert result.exit_code == 0
    assert (out / "summary.csv").exists()


def test_run_bad_config(invoke, write_config):
    result = invoke("run", "--config", str(write_config(m=3)))
    assert result.exit_code == 2
    assert "Config error" in result.output


def test_refute_single_register(invoke, write_config):
    path = write_config(protocol="single-register", n=2, m=1, k=1, s_instances=2)
    result = invoke("refute", "--config", str(path), "--out", str(invoke.out))
    assert result.exit_code == 0
    assert (invoke.out / "refutation.jsonl").exists()
    (experiment,) = invoke.db().list_experiments()
    (refutation,) = invoke.db().get_refutations(experiment["id"])
    assert refutation["outputs"] == [0, 1]
    assert refutation["stages"][0]["P"] == [0]


def test_refute_not_found_when_registers_suffice(invoke, write_config):
    path = write_config(protocol="repeated", n=2, m=1, k=1, s_instances=2)
    result = invoke("refute", "--config", str(path), "--out", str(invoke.out))
    assert result.exit_code == 3
    assert invoke.db().list_experiments()[0]["outcome"] == "stuck"


def test_refute_needs_repeated_protocol(invoke, write_config):
    assert invoke("refute", "--config", str(write_config())).exit_code == 2


def test_glue_footprint(invoke, write_config):
    path = write_config(protocol="footprint", n=2, m=1, k=1, r=1)
    result = invoke("glue", "--config", str(path), "--out", str(invoke.out))
    assert result.exit_code == 0
    assert (invoke.out / "glued.jsonl").exists()


def test_glue_blocked(invoke, write_config):
    path = write_config(protocol="anonymous", n=3, m=1, k=1)
    result = invoke("glue", "--config", str(path), "--out", str(invoke.out))
    assert result.exit_code == 3


def test_lemma1(invoke, write_config):
    path = write_config(n=3, m=2, k=2, domain_size=10)
    result = invoke("lemma1", "--config", str(path), "--q", "0,1", "--v", "7,9", "--out", str(invoke.out))
    assert result.exit_code == 0
    assert (invoke.out / "witness.jsonl").exists()
    (experiment,) = invoke.db().list_experiments()
    assert experiment["command"] == "lemma1"


def test_witness_alias(invoke, write_config):
    result = invoke("witness", "--config", str(write_config()), "--q", "0", "--v", "1", "--out", str(invoke.out))
    assert result.exit_code == 0
    assert (invoke.out / "witness.jsonl").exists()


def test_lemma1_all_pairs(invoke, write_config):
    result = invoke("lemma1", "--config", str(write_config()), "--all")
    assert result.exit_code == 0
    assert "9 of 9" in result.output


def test_lemma1_bad_values(invoke, write_config):
    result = invoke("lemma1", "--config", str(write_config()), "--q", "0", "--v", "42")
    assert result.exit_code == 2


def test_history(invoke, write_config):
    assert "No experiments" in invoke("history").output
    invoke("refute", "--config", str(write_config(protocol="repeated", n=2, m=1, k=1, s_instances=2)),
           "--out", str(invoke.out))
    result = invoke("history")
    assert result.exit_code == 0
    assert "1 experiments" in result.output
