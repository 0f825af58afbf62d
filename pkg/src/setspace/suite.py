"""Suite runner: every schedule of an experiment through every requested check.

Output is one CSV row per (trace, check) plus, optionally, every trace as
JSON lines. Equal configs give byte-identical CSVs.
"""

import csv
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .config import SAFETY_CHECKS, ExperimentConfig
from .protocols import ProtocolParams
from .scheduling import Schedule, ScheduleKind, Trace, gen_m_bounded_suite, run, write_trace
from .verification import (
    PropertyReport,
    Verdict,
    check_adoption,
    check_collect_linearizability,
    check_k_agreement,
    check_m_of_termination,
    check_register_usage,
    check_validity,
    monitor_late_deciders,
    monitor_single_value_per_id,
    replay,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "schedule_index",
    "schedule_kind",
    "seed",
    "check",
    "verdict",
    "step_index",
    "detail",
    "steps",
    "truncated",
]

CHECKS: dict[str, Callable[[Trace, Schedule, ProtocolParams], Optional[PropertyReport]]] = {
    "validity": lambda trace, schedule, params: check_validity(trace),
    "k-agreement": lambda trace, schedule, params: check_k_agreement(trace, params.k),
    "termination": lambda trace, schedule, params: (
        check_m_of_termination(trace, schedule) if schedule.kind is ScheduleKind.EVENTUALLY_M_BOUNDED else None
    ),
    "single-value-per-id": lambda trace, schedule, params: monitor_single_value_per_id(trace),
    "late-deciders": lambda trace, schedule, params: monitor_late_deciders(trace, params),
    "adoption": lambda trace, schedule, params: check_adoption(trace),
    "register-usage": lambda trace, schedule, params: check_register_usage(trace),
    "replay": lambda trace, schedule, params: replay(trace),
    "collect-linearizability": lambda trace, schedule, params: check_collect_linearizability(trace),
}


@dataclass
class SuiteResult:
    rows: list[dict] = field(default_factory=list)
    csv_path: Optional[Path] = None
    trace_path: Optional[Path] = None

    @property
    def safety_failures(self) -> list[dict]:
        return [r for r in self.rows if r["verdict"] == Verdict.FAIL.value and r["check"] in SAFETY_CHECKS]

    @property
    def liveness_failures(self) -> list[dict]:
        return [r for r in self.rows if r["verdict"] == Verdict.FAIL.value and r["check"] not in SAFETY_CHECKS]

    def tally(self) -> dict[str, dict[str, int]]:
        """check -> verdict -> count"""
        counts: dict[str, dict[str, int]] = {}
        for row in self.rows:
            per_check = counts.setdefault(row["check"], {v.value: 0 for v in Verdict})
            per_check[row["verdict"]] += 1
        return counts


def build_schedules(config: ExperimentConfig, params: ProtocolParams, seed: int) -> list[Schedule]:
    spec = config.suite
    if spec.kind == "m-bounded":
        return gen_m_bounded_suite(params, spec.count, seed, spec.step_cap, spec.max_prefix)
    if spec.kind == "round-robin":
        return [Schedule.round_robin(spec.step_cap) for _ in range(spec.count)]
    if spec.kind == "random":
        return [Schedule.seeded_random(seed + index, spec.step_cap) for index in range(spec.count)]
    bounded = gen_m_bounded_suite(params, spec.count // 2, seed, spec.step_cap, spec.max_prefix)
    schedules = []
    for index in range(spec.count):
        if index % 2 == 0:
            schedules.append(Schedule.round_robin(spec.step_cap))
        else:
            schedules.append(bounded[index // 2])
    return schedules


def suite_inputs(params: ProtocolParams, seed: int, index: int) -> tuple:
    """Seeded per-schedule inputs drawn from the domain, one per instance."""
    rng = random.Random(seed * 1_000_003 + index)
    return tuple(
        tuple(rng.choice(params.domain) for _ in range(params.s_instances)) for _ in range(params.n)
    )


def run_checks(trace: Trace, schedule: Schedule, params: ProtocolParams, checks) -> list[PropertyReport]:
    reports = []
    for name in checks:
        report = CHECKS[name](trace, schedule, params)
        if report is not None:
            reports.append(report)
    return reports


def run_suite(
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    write_traces: Optional[bool] = None,
    seed: Optional[int] = None,
    on_trace: Optional[Callable[[int], None]] = None,
) -> SuiteResult:
    params = config.params()
    seed = config.suite.seed if seed is None else seed
    out_dir = Path(out_dir) if out_dir is not None else config.output.dir
    write_traces = config.output.trace if write_traces is None else write_traces
    checks = config.selected_checks()
    schedules = build_schedules(config, params, seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    result = SuiteResult(csv_path=out_dir / "summary.csv")
    if write_traces:
        result.trace_path = out_dir / "traces.jsonl"
        result.trace_path.write_text("", encoding="utf-8")

    for index, schedule in enumerate(schedules):
        inputs = suite_inputs(params, seed, index)
        trace = run(params, config.protocol, inputs, schedule)
        for report in run_checks(trace, schedule, params, checks):
            result.rows.append(
                {
                    "schedule_index": index,
                    "schedule_kind": schedule.describe(),
                    "seed": "" if schedule.seed is None else schedule.seed,
                    "check": report.name,
                    "verdict": report.verdict.value,
                    "step_index": "" if report.step_index is None else report.step_index,
                    "detail": report.explanation,
                    "steps": len(trace.steps),
                    "truncated": trace.truncated,
                }
            )
            if report.failed:
                logger.warning("Schedule %d: %s failed at step %s: %s",
                               index, report.name, report.step_index, report.explanation)
        if write_traces:
            write_trace(trace, result.trace_path, schedule, append=True)
        if on_trace is not None:
            on_trace(index)

    with open(result.csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(result.rows)
    logger.info("Suite of %d schedules wrote %d rows to %s", len(schedules), len(result.rows), result.csv_path)
    return result
