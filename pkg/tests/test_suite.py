"""Tests for the schedule suite runner."""

import csv
import json

from setspace.config import ExperimentConfig
from setspace.suite import CSV_COLUMNS, build_schedules, run_suite, suite_inputs
from setspace.scheduling import ScheduleKind


def small_config(**fields):
    data = {"n": 3, "m": 1, "k": 2, "suite": {"kind": "mixed", "count": 4, "seed": 3, "step_cap": 5000}}
    data.update(fields)
    return ExperimentConfig.model_validate(data)


def test_mixed_suite_alternates():
    config = small_config()
    schedules = build_schedules(config, config.params(), seed=3)
    kinds = [s.kind for s in schedules]
    assert kinds == [ScheduleKind.ROUND_ROBIN, ScheduleKind.EVENTUALLY_M_BOUNDED] * 2


def test_suite_inputs_are_seeded():
    params = small_config().params()
    assert suite_inputs(params, 3, 0) == suite_inputs(params, 3, 0)
    assert all(v in params.domain for seq in suite_inputs(params, 3, 1) for v in seq)


def test_run_suite_writes_csv(tmp_path):
    result = run_suite(small_config(), out_dir=tmp_path)
    assert result.csv_path == tmp_path / "summary.csv"
    with open(result.csv_path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows
    assert list(rows[0].keys()) == CSV_COLUMNS
    assert not result.safety_failures
    tally = result.tally()
    assert tally["validity"]["pass"] == 4
    assert tally["termination"]["pass"] + tally["termination"]["inconclusive"] == 2


def test_run_suite_is_reproducible(tmp_path):
    first = run_suite(small_config(), out_dir=tmp_path / "a")
    second = run_suite(small_config(), out_dir=tmp_path / "b")
    assert first.csv_path.read_bytes() == second.csv_path.read_bytes()


def test_empty_suite(tmp_path):
    result = run_suite(small_config(suite={"count": 0}), out_dir=tmp_path)
    assert result.rows == []
    assert result.csv_path.read_text().strip() == ",".join(CSV_COLUMNS)


def test_run_suite_writes_traces(tmp_path):
    seen = []
    result = run_suite(small_config(suite={"kind": "m-bounded", "count": 2, "seed": 1}), out_dir=tmp_path,
                       write_traces=True, on_trace=seen.append)
    assert seen == [0, 1]
    headers = [json.loads(line) for line in result.trace_path.read_text().splitlines() if '"header"' in line]
    assert len(headers) == 2
    assert headers[0]["header"]["schedule"]["kind"] == "m-bounded"


def test_repeated_m_bounded_suite(tmp_path):
    config = small_config(protocol="repeated", s_instances=2,
                          checks=["validity", "k-agreement", "termination", "adoption"],
                          suite={"kind": "m-bounded", "count": 3, "seed": 4, "step_cap": 20_000})
    result = run_suite(config, out_dir=tmp_path)
    assert not result.safety_failures
    assert not result.liveness_failures
    tally = result.tally()
    assert tally["termination"]["pass"] == 3
    assert tally["k-agreement"]["pass"] == 3
    assert tally["adoption"]["fail"] == 0


def test_anonymous_double_collect_suite(tmp_path):
    config = small_config(protocol="anonymous", s_instances=2, snapshot_mode="double-collect",
                          checks=["validity", "k-agreement", "adoption", "collect-linearizability"],
                          suite={"kind": "m-bounded", "count": 3, "seed": 2, "step_cap": 20_000})
    result = run_suite(config, out_dir=tmp_path)
    assert not result.safety_failures
    assert "collect-linearizability" in result.tally()
