"""Execution engine: turns machines, memory and a schedule into a Trace.

A schedule is a lazy stream of (pid, thread) activations. Every activation
produces exactly one Step record, so schedule positions and step indices
line up. Activations of halted processes are recorded as NOOP steps.
"""

import json
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from .protocols import (
    DecisionEvent,
    DecisionKind,
    ProtocolError,
    ProtocolKind,
    ProtocolParams,
    Status,
    Thread,
    initial_configuration,
    invoke,
    machine_step,
)
from .shared_memory import BOT, Cell, Configuration, Primitive

logger = logging.getLogger(__name__)

DEFAULT_STEP_CAP = 100_000
DEFAULT_T2_BIAS = 7


@dataclass(frozen=True)
class Step:
    step_index: int
    pid: int
    thread: Thread
    primitive: Primitive
    object: str | None = None
    component: int | None = None
    value_written: Any = None
    scan_result: tuple | None = None
    read_value: Any = None
    invoked: int | None = None
    events: tuple[DecisionEvent, ...] = ()

    @property
    def written_cell(self) -> Cell | None:
        if self.primitive in (Primitive.UPDATE, Primitive.WRITE):
            return Cell(self.object, self.component)
        return None

    def observation(self) -> tuple:
        """Everything the step wrote, read or output, without pid or index."""
        decisions = tuple((e.kind, e.value) for e in self.events)
        return (self.primitive, self.object, self.component, self.value_written,
                self.scan_result, self.read_value, decisions)


@dataclass
class Trace:
    protocol: ProtocolKind
    params: ProtocolParams
    inputs: tuple
    initial: Configuration
    steps: list[Step] = field(default_factory=list)
    final: Configuration | None = None
    truncated: bool = False

    @property
    def decisions(self) -> list[DecisionEvent]:
        return [event for step in self.steps for event in step.events]

    def activations(self) -> list[tuple[int, Thread]]:
        return [(step.pid, step.thread) for step in self.steps]


def step_once(config: Configuration, pid: int, thread: Thread = Thread.T1, step_index: int = 0):
    """Apply one activation of pid. Idle or decided machines are invoked first.

    Returns the new configuration and the Step record.
    """
    machine = config.machines[pid]
    if machine.status is Status.HALTED:
        raise ProtocolError(f"Process {pid} has halted")

    invoked = None
    if machine.status is not Status.ACTIVE:
        machine = invoke(machine)
        invoked = machine.t
        if machine.status is not Status.ACTIVE:
            event = DecisionEvent(pid, machine.t, machine.output, step_index, DecisionKind.HISTORY_ADOPTED)
            step = Step(step_index, pid, thread, Primitive.INVOKE, invoked=invoked, events=(event,))
            return config.with_machine(pid, machine), step

    machine, config, effect = machine_step(machine, config, thread)
    events = ()
    if effect.decision is not None:
        kind, value = effect.decision
        events = (DecisionEvent(pid, machine.t, value, step_index, kind),)
    step = Step(
        step_index,
        pid,
        thread,
        effect.primitive,
        effect.object,
        effect.component,
        effect.value_written,
        effect.scan_result,
        effect.read_value,
        invoked,
        events,
    )
    return config.with_machine(pid, machine), step


def can_step(config: Configuration, pid: int) -> bool:
    machine = config.machines[pid]
    return machine.status is Status.ACTIVE or machine.has_next_instance


def activate(config: Configuration, pid: int, thread: Thread = Thread.T1, step_index: int = 0):
    """Like step_once, but a process with nothing left to do takes a NOOP step."""
    if not can_step(config, pid):
        return config, Step(step_index, pid, thread, Primitive.NOOP)
    return step_once(config, pid, thread, step_index)


class ScheduleKind(str, Enum):
    SCRIPTED = "scripted"
    ROUND_ROBIN = "round-robin"
    SEEDED_RANDOM = "random"
    EVENTUALLY_M_BOUNDED = "m-bounded"


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind
    script: tuple = ()
    seed: int | None = None
    prefix_len: int = 0
    survivors: frozenset = frozenset()
    step_cap: int = DEFAULT_STEP_CAP
    t2_bias: int = DEFAULT_T2_BIAS

    @classmethod
    def scripted(cls, activations, step_cap: int | None = None) -> "Schedule":
        """Accepts bare pids (thread 1) or (pid, thread) pairs."""
        script = tuple(
            (a, Thread.T1) if isinstance(a, int) else (a[0], Thread(a[1])) for a in activations
        )
        return cls(ScheduleKind.SCRIPTED, script=script, step_cap=len(script) if step_cap is None else step_cap)

    @classmethod
    def round_robin(cls, step_cap: int = DEFAULT_STEP_CAP, t2_bias: int = DEFAULT_T2_BIAS) -> "Schedule":
        return cls(ScheduleKind.ROUND_ROBIN, step_cap=step_cap, t2_bias=t2_bias)

    @classmethod
    def seeded_random(cls, seed: int, step_cap: int = DEFAULT_STEP_CAP) -> "Schedule":
        return cls(ScheduleKind.SEEDED_RANDOM, seed=seed, step_cap=step_cap)

    @classmethod
    def eventually_m_bounded(cls, seed: int, prefix_len: int, survivors, step_cap: int = DEFAULT_STEP_CAP):
        survivors = frozenset(survivors)
        if not survivors:
            raise ValueError("An eventually m-bounded schedule needs at least one survivor")
        return cls(ScheduleKind.EVENTUALLY_M_BOUNDED, seed=seed, prefix_len=prefix_len,
                   survivors=survivors, step_cap=step_cap)

    def activations(self, n: int, threaded: bool = False) -> Iterator[tuple[int, Thread]]:
        if self.kind is ScheduleKind.SCRIPTED:
            yield from self.script
            return

        rng = random.Random(self.seed)
        counts = [0] * n
        survivors = sorted(self.survivors)
        index = 0
        while True:
            if self.kind is ScheduleKind.ROUND_ROBIN:
                pid = index % n
            elif self.kind is ScheduleKind.SEEDED_RANDOM or index < self.prefix_len:
                pid = rng.randrange(n)
            else:
                pid = rng.choice(survivors)

            thread = Thread.T1
            if threaded:
                counts[pid] += 1
                if self.kind is ScheduleKind.ROUND_ROBIN:
                    second = counts[pid] % (self.t2_bias + 1) == 0
                else:
                    second = rng.random() < 1 / (self.t2_bias + 1)
                thread = Thread.T2 if second else Thread.T1
            yield pid, thread
            index += 1

    def quiescent(self, config: Configuration, index: int) -> bool:
        if self.kind is ScheduleKind.SCRIPTED:
            return False
        if all(m.status is Status.HALTED for m in config.machines):
            return True
        if self.kind is ScheduleKind.EVENTUALLY_M_BOUNDED and index >= self.prefix_len:
            return all(config.machines[p].status is Status.HALTED for p in self.survivors)
        return False

    def describe(self) -> str:
        if self.kind is ScheduleKind.EVENTUALLY_M_BOUNDED:
            survivors = ",".join(str(p) for p in sorted(self.survivors))
            return f"{self.kind.value}(prefix={self.prefix_len},survivors={survivors})"
        if self.kind is ScheduleKind.SCRIPTED:
            return f"{self.kind.value}(len={len(self.script)})"
        return self.kind.value

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "script": [[pid, thread.value] for pid, thread in self.script],
            "seed": self.seed,
            "prefix_len": self.prefix_len,
            "survivors": sorted(self.survivors),
            "step_cap": self.step_cap,
            "t2_bias": self.t2_bias,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        return cls(
            ScheduleKind(data["kind"]),
            script=tuple((pid, Thread(thread)) for pid, thread in data.get("script", [])),
            seed=data.get("seed"),
            prefix_len=data.get("prefix_len", 0),
            survivors=frozenset(data.get("survivors", [])),
            step_cap=data.get("step_cap", DEFAULT_STEP_CAP),
            t2_bias=data.get("t2_bias", DEFAULT_T2_BIAS),
        )


def run(params: ProtocolParams, protocol: ProtocolKind, inputs, schedule: Schedule) -> Trace:
    """Execute a schedule from the initial configuration.

    Stops when the schedule is exhausted, when the schedule reports
    quiescence, or at step_cap (reported through `truncated`).
    """
    config = initial_configuration(protocol, params, inputs)
    trace = Trace(protocol, params, tuple(tuple(seq) for seq in inputs), config)
    for pid, thread in schedule.activations(params.n, protocol.threaded):
        index = len(trace.steps)
        if schedule.quiescent(config, index):
            break
        if index >= schedule.step_cap:
            trace.truncated = True
            break
        if not 0 <= pid < params.n:
            raise ValueError(f"Schedule activates pid {pid}, n={params.n}")
        config, step = activate(config, pid, thread, index)
        trace.steps.append(step)
    trace.final = config
    if trace.truncated:
        logger.debug("Trace truncated at %d steps (%s)", len(trace.steps), schedule.describe())
    return trace


def gen_m_bounded_suite(
    params: ProtocolParams,
    count: int,
    seed: int,
    step_cap: int = DEFAULT_STEP_CAP,
    max_prefix: int | None = None,
) -> list[Schedule]:
    """Eventually m-bounded schedules with varied survivor sets and chaotic prefixes."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    rng = random.Random(seed)
    max_prefix = 20 * params.n if max_prefix is None else max_prefix
    suite = []
    for _ in range(count):
        size = rng.randint(1, params.m)
        survivors = rng.sample(range(params.n), size)
        suite.append(
            Schedule.eventually_m_bounded(
                seed=rng.randrange(2**31),
                prefix_len=rng.randint(0, max_prefix),
                survivors=survivors,
                step_cap=step_cap,
            )
        )
    return suite


def starvation_script(
    params: ProtocolParams,
    inputs,
    victim: int,
    runner: int,
    max_steps: int = 10_000,
    t2_every: int = DEFAULT_T2_BIAS + 1,
) -> list[tuple[int, Thread]]:
    """Reactive adversary that keeps the victim's double collects failing.

    After every victim activation the runner is stepped until it has
    written a snapshot component, so no two consecutive victim collects
    agree. Every `t2_every`-th victim activation runs its second thread.
    The script ends once the victim has output for its first instance.
    """
    config = initial_configuration(ProtocolKind.ANONYMOUS, params, inputs)
    script = []
    victim_turns = 0
    while len(script) < max_steps:
        machine = config.machines[victim]
        if machine.t >= 1 and machine.status is not Status.ACTIVE:
            break
        victim_turns += 1
        thread = Thread.T2 if victim_turns % t2_every == 0 else Thread.T1
        config, _ = activate(config, victim, thread, len(script))
        script.append((victim, thread))
        while len(script) < max_steps and can_step(config, runner):
            config, step = activate(config, runner, Thread.T1, len(script))
            script.append((runner, Thread.T1))
            if step.primitive is Primitive.UPDATE:
                break
    return script


# --- Trace serialization ---


def encode_value(value):
    """JSON form of a register value: ⊥ becomes null, tuples become lists."""
    if value is BOT:
        return None
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [encode_value(v) for v in value]
    if isinstance(value, frozenset):
        return sorted(encode_value(v) for v in value)
    return value


def step_to_dict(step: Step) -> dict:
    return {
        "step_index": step.step_index,
        "pid": step.pid,
        "thread": step.thread.value,
        "primitive": step.primitive.value,
        "object": step.object,
        "component": step.component,
        "value_written": encode_value(step.value_written),
        "scan_result": encode_value(step.scan_result),
        "read_value": encode_value(step.read_value),
        "invoked": step.invoked,
        "events": [
            {"pid": e.pid, "t": e.t, "value": encode_value(e.value), "step_index": e.step_index, "kind": e.kind.value}
            for e in step.events
        ],
    }


def trace_header(trace: Trace, schedule: Schedule | None = None) -> dict:
    params = trace.params
    header = {
        "protocol": trace.protocol.value,
        "params": {
            "n": params.n,
            "k": params.k,
            "m": params.m,
            "r": params.r,
            "s_instances": params.s_instances,
            "domain": list(params.domain),
            "snapshot_mode": params.snapshot_mode.value,
        },
        "inputs": encode_value(trace.inputs),
        "steps": len(trace.steps),
        "truncated": trace.truncated,
    }
    if schedule is not None:
        header["schedule"] = schedule.to_dict()
    return header


def write_trace(trace: Trace, path: Path, schedule: Schedule | None = None, append: bool = False) -> Path:
    """Write a trace as JSON lines: one header line, then one line per step."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w", encoding="utf-8") as f:
        f.write(json.dumps({"header": trace_header(trace, schedule)}) + "\n")
        for step in trace.steps:
            f.write(json.dumps(step_to_dict(step)) + "\n")
    return path
