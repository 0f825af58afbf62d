"""Tests for the SQLite results ledger."""

import pytest


def test_create_db(tmp_db):
    assert tmp_db.db_path.exists()


def test_add_experiment(tmp_db):
    exp_id = tmp_db.add_experiment("run", "one-shot", 3, 1, 2, r=3, config={"n": 3})
    assert exp_id > 0
    experiment = tmp_db.get_experiment(exp_id)
    assert experiment["protocol"] == "one-shot"
    assert experiment["config_json"] == '{"n": 3}'
    assert experiment["outcome"] is None


def test_finish_experiment(tmp_db):
    exp_id = tmp_db.add_experiment("refute", "single-register", 2, 1, 1)
    tmp_db.finish_experiment(exp_id, "refuted", "out/refutation.jsonl")
    experiment = tmp_db.get_experiment(exp_id)
    assert experiment["outcome"] == "refuted"
    assert experiment["output_path"] == "out/refutation.jsonl"


def test_finish_missing_experiment(tmp_db):
    with pytest.raises(ValueError):
        tmp_db.finish_experiment(99, "ok")


def test_get_missing_experiment(tmp_db):
    assert tmp_db.get_experiment(99) is None


def test_list_experiments_newest_first(tmp_db):
    first = tmp_db.add_experiment("run", "one-shot", 3, 1, 2)
    second = tmp_db.add_experiment("bounds", "one-shot", 4, 1, 2)
    assert [e["id"] for e in tmp_db.list_experiments()] == [second, first]
    assert len(tmp_db.list_experiments(limit=1)) == 1


def test_reports(tmp_db):
    exp_id = tmp_db.add_experiment("run", "one-shot", 3, 1, 2)
    rows = [
        {"schedule_index": 0, "schedule_kind": "round-robin", "check": "validity", "verdict": "pass",
         "step_index": "", "detail": ""},
        {"schedule_index": 0, "schedule_kind": "round-robin", "check": "k-agreement", "verdict": "fail",
         "step_index": 12, "detail": "instance 1 has 3 outputs, k=2"},
    ]
    assert tmp_db.add_reports(exp_id, rows) == 2
    assert len(tmp_db.get_reports(exp_id)) == 2
    failures = tmp_db.get_reports(exp_id, verdict="fail")
    assert len(failures) == 1
    assert failures[0]["check_name"] == "k-agreement"


def test_refutations(tmp_db):
    exp_id = tmp_db.add_experiment("refute", "single-register", 2, 1, 1)
    ref_id = tmp_db.add_refutation(exp_id, "covering", instance=2, outputs={1, 0}, steps=8,
                                   stages=[{"j": 1, "P": [0]}])
    assert ref_id > 0
    (refutation,) = tmp_db.get_refutations(exp_id)
    assert refutation["outputs"] == [0, 1]
    assert refutation["stages"] == [{"j": 1, "P": [0]}]
    assert refutation["instance"] == 2


def test_stats(tmp_db):
    exp_id = tmp_db.add_experiment("run", "one-shot", 3, 1, 2)
    tmp_db.add_reports(exp_id, [{"check": "validity", "verdict": "fail"}])
    tmp_db.add_refutation(exp_id, "gluing", outputs=[0, 1])
    stats = tmp_db.get_stats()
    assert stats == {"experiments": 1, "reports": 1, "failures": 1, "refutations": 1}
