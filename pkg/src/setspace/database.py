"""SQLite ledger of experiments, check reports and refutations."""

import json
import sqlite3
from contextlib import contextmanager
from pathlib import Path
from typing import Optional


DEFAULT_DB_PATH = Path.cwd() / "data" / "setspace.db"

SCHEMA = """
CREATE TABLE IF NOT EXISTS experiments (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    command TEXT NOT NULL,
    protocol TEXT NOT NULL,
    n INTEGER NOT NULL,
    m INTEGER NOT NULL,
    k INTEGER NOT NULL,
    r INTEGER,
    s_instances INTEGER DEFAULT 1,
    snapshot_mode TEXT,
    config_json TEXT,
    outcome TEXT,
    output_path TEXT,
    created_at TEXT DEFAULT (datetime('now'))
);

CREATE TABLE IF NOT EXISTS reports (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    experiment_id INTEGER NOT NULL REFERENCES experiments(id),
    schedule_index INTEGER,
    schedule_kind TEXT,
    check_name TEXT NOT NULL,
    verdict TEXT NOT NULL,
    step_index INTEGER,
    detail TEXT
);

CREATE TABLE IF NOT EXISTS refutations (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    experiment_id INTEGER NOT NULL REFERENCES experiments(id),
    kind TEXT NOT NULL,
    instance INTEGER,
    outputs TEXT,
    steps INTEGER,
    trace_path TEXT,
    stages_json TEXT
);

CREATE INDEX IF NOT EXISTS idx_reports_experiment ON reports(experiment_id);
CREATE INDEX IF NOT EXISTS idx_reports_verdict ON reports(verdict);
CREATE INDEX IF NOT EXISTS idx_refutations_experiment ON refutations(experiment_id);
"""


class Database:
    def __init__(self, db_path: Optional[Path] = None):
        self.db_path = Path(db_path) if db_path else DEFAULT_DB_PATH
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._init_db()

    def _init_db(self):
        with self.connect() as conn:
            conn.executescript(SCHEMA)

    @contextmanager
    def connect(self):
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA foreign_keys=ON")
        try:
            yield conn
            conn.commit()
        except Exception:
            conn.rollback()
            raise
        finally:
            conn.close()

    # --- Experiments ---

    def add_experiment(self, command: str, protocol: str, n: int, m: int, k: int, **kwargs) -> int:
        if "config" in kwargs:
            kwargs["config_json"] = json.dumps(kwargs.pop("config"), default=str)
        cols = ["command", "protocol", "n", "m", "k"] + list(kwargs.keys())
        placeholders = ", ".join("?" for _ in cols)
        with self.connect() as conn:
            cur = conn.execute(
                f"INSERT INTO experiments ({', '.join(cols)}) VALUES ({placeholders})",
                (command, protocol, n, m, k, *kwargs.values()),
            )
            return cur.lastrowid

    def finish_experiment(self, experiment_id: int, outcome: str, output_path: Optional[str] = None):
        with self.connect() as conn:
            updated = conn.execute(
                "UPDATE experiments SET outcome=?, output_path=? WHERE id=?",
                (outcome, output_path, experiment_id),
            ).rowcount
        if not updated:
            raise ValueError(f"Experiment {experiment_id} not found")

    def get_experiment(self, experiment_id: int) -> Optional[dict]:
        with self.connect() as conn:
            row = conn.execute("SELECT * FROM experiments WHERE id=?", (experiment_id,)).fetchone()
            return dict(row) if row else None

    def list_experiments(self, limit: int = 50) -> list[dict]:
        with self.connect() as conn:
            rows = conn.execute(
                "SELECT * FROM experiments ORDER BY id DESC LIMIT ?", (limit,)
            ).fetchall()
            return [dict(r) for r in rows]

    # --- Reports ---

    def add_reports(self, experiment_id: int, rows: list[dict]) -> int:
        with self.connect() as conn:
            conn.executemany(
                """INSERT INTO reports
                   (experiment_id, schedule_index, schedule_kind, check_name, verdict, step_index, detail)
                   VALUES (?, ?, ?, ?, ?, ?, ?)""",
                [
                    (
                        experiment_id,
                        row.get("schedule_index"),
                        row.get("schedule_kind"),
                        row["check"],
                        row["verdict"],
                        row.get("step_index"),
                        row.get("detail"),
                    )
                    for row in rows
                ],
            )
        return len(rows)

    def get_reports(self, experiment_id: int, verdict: Optional[str] = None) -> list[dict]:
        query = "SELECT * FROM reports WHERE experiment_id=?"
        params = [experiment_id]
        if verdict:
            query += " AND verdict=?"
            params.append(verdict)
        with self.connect() as conn:
            rows = conn.execute(query + " ORDER BY id", params).fetchall()
            return [dict(r) for r in rows]

    # --- Refutations ---

    def add_refutation(self, experiment_id: int, kind: str, **kwargs) -> int:
        if "outputs" in kwargs:
            kwargs["outputs"] = json.dumps(sorted(kwargs["outputs"]))
        if "stages" in kwargs:
            kwargs["stages_json"] = json.dumps(kwargs.pop("stages"))
        cols = ["experiment_id", "kind"] + list(kwargs.keys())
        placeholders = ", ".join("?" for _ in cols)
        with self.connect() as conn:
            cur = conn.execute(
                f"INSERT INTO refutations ({', '.join(cols)}) VALUES ({placeholders})",
                (experiment_id, kind, *kwargs.values()),
            )
            return cur.lastrowid

    def get_refutations(self, experiment_id: int) -> list[dict]:
        with self.connect() as conn:
            rows = conn.execute(
                "SELECT * FROM refutations WHERE experiment_id=? ORDER BY id", (experiment_id,)
            ).fetchall()
            result = []
            for r in rows:
                d = dict(r)
                d["outputs"] = json.loads(d["outputs"]) if d["outputs"] else []
                d["stages"] = json.loads(d.pop("stages_json")) if d["stages_json"] else []
                result.append(d)
            return result

    # --- Stats ---

    def get_stats(self) -> dict:
        with self.connect() as conn:
            experiments = conn.execute("SELECT COUNT(*) as c FROM experiments").fetchone()["c"]
            reports = conn.execute("SELECT COUNT(*) as c FROM reports").fetchone()["c"]
            failures = conn.execute("SELECT COUNT(*) as c FROM reports WHERE verdict='fail'").fetchone()["c"]
            refutations = conn.execute("SELECT COUNT(*) as c FROM refutations").fetchone()["c"]
            return {
                "experiments": experiments,
                "reports": reports,
                "failures": failures,
                "refutations": refutations,
            }
