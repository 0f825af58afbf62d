"""Shared test fixtures."""

import json
import tempfile
from pathlib import Path

import pytest

from setspace.database import Database
from setspace.protocols import ProtocolKind, ProtocolParams


@pytest.fixture
def tmp_db():
    """Create a temporary database."""
    with tempfile.TemporaryDirectory() as tmpdir:
        db_path = Path(tmpdir) / "test.db"
        yield Database(db_path)


@pytest.fixture
def one_shot_params():
    """n=2, k=m=1: two components."""
    return ProtocolParams.for_protocol(ProtocolKind.ONE_SHOT, n=2, k=1, m=1)


@pytest.fixture
def single_register_params():
    """Under-provisioned repeated consensus: one register where two are needed."""
    return ProtocolParams.for_protocol(ProtocolKind.SINGLE_REGISTER, n=2, k=1, m=1, s_instances=2)


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment config and return its path."""

    def _write(**fields):
        data = {"n": 3, "m": 1, "k": 2, "suite": {"kind": "mixed", "count": 4, "seed": 3, "step_cap": 20_000}}
        data.update(fields)
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(data))
        return path

    return _write
