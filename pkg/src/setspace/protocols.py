"""Protocols: m-obstruction-free k-set agreement as per-process step machines.

Each machine is an immutable value. `machine_step` performs exactly one
shared-memory step and returns the new machine, the new configuration and
an `Effect` describing what the step did. Five protocol kinds are modelled:

- ONE_SHOT: one-shot agreement over a snapshot of min(n+2m-k, n) components
- REPEATED: repeated agreement over the same snapshot, tuples carry (t, history)
- ANONYMOUS: repeated agreement without identifiers, (m+1)(n-k)+m^2
  components plus the history register H and a second thread reading H
- SINGLE_REGISTER: read-then-write repeated consensus on one register
- FOOTPRINT: anonymous one-shot write/read pass over f registers

The last two are deliberately under-provisioned and exist as refutation
targets.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, NamedTuple

from .shared_memory import (
    BOT,
    Cell,
    CollectState,
    Configuration,
    Done,
    MemoryModel,
    Primitive,
    SnapshotMode,
    begin_collect,
    collect_step,
    initial_configuration as _initial_memory_configuration,
    read_register,
    scan,
    update,
    write_register,
)

logger = logging.getLogger(__name__)

SNAPSHOT = "A"
HISTORY_REGISTER = "H"
SINGLE_REGISTER = "R"


class ProtocolError(RuntimeError):
    """A machine was driven outside its protocol (bad invoke, step or thread)."""


class ProtocolKind(str, Enum):
    ONE_SHOT = "one-shot"
    REPEATED = "repeated"
    ANONYMOUS = "anonymous"
    SINGLE_REGISTER = "single-register"
    FOOTPRINT = "footprint"

    @property
    def anonymous(self) -> bool:
        return self in (ProtocolKind.ANONYMOUS, ProtocolKind.FOOTPRINT)

    @property
    def repeated(self) -> bool:
        return self in (ProtocolKind.REPEATED, ProtocolKind.ANONYMOUS, ProtocolKind.SINGLE_REGISTER)

    @property
    def threaded(self) -> bool:
        return self is ProtocolKind.ANONYMOUS


class Thread(str, Enum):
    T1 = "T1"
    T2 = "T2"


class Status(str, Enum):
    IDLE = "idle"
    ACTIVE = "active"
    DECIDED = "decided"  # output for instance t, further instances remain
    HALTED = "halted"  # output for the last instance in its input sequence


class Pc(str, Enum):
    UPDATE = "update"
    SCAN = "scan"
    WRITE_H = "write-H"
    READ = "read"
    WRITE = "write"
    CHECK = "check"


class DecisionKind(str, Enum):
    T_DECIDING = "t-deciding"
    HISTORY_ADOPTED = "history-adopted"
    H_ADOPTED = "h-adopted"


class Pair(NamedTuple):
    """One-shot snapshot entry."""

    value: Any
    pid: int


class RepeatedTuple(NamedTuple):
    """Repeated-agreement snapshot entry."""

    value: Any
    pid: int
    t: int
    history: tuple


class AnonymousTuple(NamedTuple):
    """Identifier-free entry used by ANONYMOUS and SINGLE_REGISTER."""

    value: Any
    t: int
    history: tuple


def components_for(kind: ProtocolKind, n: int, k: int, m: int) -> int:
    """Snapshot components (or registers, for the fixtures) a protocol uses."""
    if kind in (ProtocolKind.ONE_SHOT, ProtocolKind.REPEATED):
        return min(n + 2 * m - k, n)
    if kind is ProtocolKind.ANONYMOUS:
        return (m + 1) * (n - k) + m * m
    return 1


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    k: int
    m: int
    r: int
    s_instances: int = 1
    domain: tuple = ()
    snapshot_mode: SnapshotMode = SnapshotMode.ATOMIC

    @classmethod
    def for_protocol(
        cls,
        kind: ProtocolKind,
        n: int,
        k: int,
        m: int,
        s_instances: int = 1,
        domain_size: int | None = None,
        snapshot_mode: SnapshotMode = SnapshotMode.ATOMIC,
        r: int | None = None,
    ) -> "ProtocolParams":
        """Build params with r from the protocol's formula unless overridden."""
        expected = components_for(kind, n, k, m)
        if r is None:
            r = expected
        elif r != expected:
            logger.warning("%s with r=%d instead of %d", kind.value, r, expected)
        size = domain_size if domain_size is not None else max(n, k + 1)
        params = cls(n, k, m, r, s_instances, tuple(range(size)), snapshot_mode)
        params.validate(kind)
        return params

    @property
    def c(self) -> int:
        """Number of value groups in the lower-bound constructions."""
        return -(-(self.k + 1) // self.m)

    @property
    def ell(self) -> int:
        return self.n + self.m - self.k

    def validate(self, kind: ProtocolKind) -> None:
        if not 1 <= self.m <= self.k < self.n:
            raise ValueError(f"Need 1 <= m <= k < n, got n={self.n} k={self.k} m={self.m}")
        if self.r < 1:
            raise ValueError(f"Need at least one component, got r={self.r}")
        if self.s_instances < 1:
            raise ValueError(f"Need at least one instance, got s_instances={self.s_instances}")
        if kind is ProtocolKind.SINGLE_REGISTER and self.r != 1:
            raise ValueError(f"{kind.value} uses exactly one register, got r={self.r}")
        if not kind.repeated and self.s_instances != 1:
            raise ValueError(f"{kind.value} is one-shot, got s_instances={self.s_instances}")
        if len(self.domain) <= self.k:
            raise ValueError(f"Domain of {len(self.domain)} values must exceed k={self.k}")


def memory_model(kind: ProtocolKind, params: ProtocolParams) -> MemoryModel:
    if kind in (ProtocolKind.ONE_SHOT, ProtocolKind.REPEATED):
        return MemoryModel(snapshots=((SNAPSHOT, params.r),), mode=params.snapshot_mode)
    if kind is ProtocolKind.ANONYMOUS:
        return MemoryModel(
            snapshots=((SNAPSHOT, params.r),),
            registers=((HISTORY_REGISTER, ()),),
            mode=params.snapshot_mode,
        )
    if kind is ProtocolKind.SINGLE_REGISTER:
        return MemoryModel(registers=((SINGLE_REGISTER, BOT),))
    return MemoryModel(registers=tuple((f"{SINGLE_REGISTER}{x}", BOT) for x in range(params.r)))


@dataclass(frozen=True)
class ProcessMachine:
    """Local state of one process.

    `pid` is kept for bookkeeping only. The anonymous kinds never branch on
    it and never write it to memory.
    """

    protocol: ProtocolKind
    params: ProtocolParams = field(compare=False, repr=False)
    pid: int
    inputs: tuple
    pc: Pc = Pc.UPDATE
    pref: Any = None
    i: int = 0
    t: int = 0
    history: tuple = ()
    pending: CollectState | None = None
    thread_focus: Thread = Thread.T1
    status: Status = Status.IDLE
    output: Any = None

    @property
    def has_next_instance(self) -> bool:
        return self.status in (Status.IDLE, Status.DECIDED) and self.t < len(self.inputs)

    def anonymous_view(self) -> "ProcessMachine":
        return replace(self, pid=-1)


@dataclass(frozen=True)
class Effect:
    """What one machine step did to shared memory and to the process."""

    primitive: Primitive
    object: str | None = None
    component: int | None = None
    value_written: Any = None
    scan_result: tuple | None = None
    read_value: Any = None
    decision: tuple | None = None  # (DecisionKind, value)

    @property
    def written_cell(self) -> Cell | None:
        if self.primitive in (Primitive.UPDATE, Primitive.WRITE):
            return Cell(self.object, self.component)
        return None


@dataclass(frozen=True)
class DecisionEvent:
    pid: int
    t: int
    value: Any
    step_index: int
    kind: DecisionKind


class StepResult(NamedTuple):
    machine: ProcessMachine
    config: Configuration
    effect: Effect


def make_machine(protocol: ProtocolKind, params: ProtocolParams, pid: int, input_sequence) -> ProcessMachine:
    params.validate(protocol)
    if not 0 <= pid < params.n:
        raise ValueError(f"pid {pid} out of range for n={params.n}")
    inputs = tuple(input_sequence)
    if not inputs:
        raise ValueError(f"Process {pid} has no inputs")
    if not protocol.repeated and len(inputs) != 1:
        raise ValueError(f"{protocol.value} takes one input per process, got {len(inputs)}")
    return ProcessMachine(protocol, params, pid, inputs)


def initial_configuration(protocol: ProtocolKind, params: ProtocolParams, inputs) -> Configuration:
    if len(inputs) != params.n:
        raise ValueError(f"Need inputs for {params.n} processes, got {len(inputs)}")
    machines = [make_machine(protocol, params, pid, seq) for pid, seq in enumerate(inputs)]
    return _initial_memory_configuration(memory_model(protocol, params), machines)


def own_id_inputs(params: ProtocolParams, instances: int | None = None) -> tuple:
    """Every process proposes its own pid (mod the domain) in every instance."""
    count = instances if instances is not None else params.s_instances
    return tuple((params.domain[pid % len(params.domain)],) * count for pid in range(params.n))


def invoke(machine: ProcessMachine) -> ProcessMachine:
    """Start the machine's next instance with its next input.

    A repeated machine whose history already covers the new instance
    outputs straight away without touching memory.
    """
    if not machine.has_next_instance:
        if machine.status is Status.ACTIVE:
            raise ProtocolError(f"Process {machine.pid} is already active in instance {machine.t}")
        raise ProtocolError(f"Process {machine.pid} has no further instances to invoke")
    t = machine.t + 1
    pref = machine.inputs[t - 1]
    kind = machine.protocol
    started = replace(machine, t=t, pref=pref, status=Status.ACTIVE, output=None, pending=None)

    if kind is ProtocolKind.ANONYMOUS:
        return replace(started, pc=Pc.WRITE_H)
    if kind in (ProtocolKind.REPEATED, ProtocolKind.SINGLE_REGISTER) and len(machine.history) >= t:
        return _finish(started, machine.history[t - 1])
    if kind is ProtocolKind.SINGLE_REGISTER:
        return replace(started, pc=Pc.READ)
    if kind is ProtocolKind.FOOTPRINT:
        return replace(started, pc=Pc.WRITE, i=0)
    return replace(started, pc=Pc.UPDATE)


def _finish(machine: ProcessMachine, value, history: tuple | None = None) -> ProcessMachine:
    status = Status.HALTED if machine.t >= len(machine.inputs) else Status.DECIDED
    return replace(
        machine,
        output=value,
        status=status,
        pending=None,
        history=machine.history if history is None else history,
    )


def poised_cell(machine: ProcessMachine) -> Cell | None:
    """The cell the machine's next thread-1 activation writes, if any.

    Idle and decided machines are judged by the first step of their next
    invocation.
    """
    if machine.status is Status.HALTED:
        return None
    if machine.status is not Status.ACTIVE:
        if not machine.has_next_instance:
            return None
        machine = invoke(machine)
        if machine.status is not Status.ACTIVE:
            return None
    if machine.pc is Pc.UPDATE:
        return Cell(SNAPSHOT, machine.i)
    if machine.pc is Pc.WRITE_H:
        return Cell(HISTORY_REGISTER)
    if machine.pc is Pc.WRITE:
        return Cell(_register_name(machine))
    return None


def machine_step(machine: ProcessMachine, config: Configuration, thread: Thread = Thread.T1) -> StepResult:
    if machine.status is not Status.ACTIVE:
        raise ProtocolError(f"Process {machine.pid} is {machine.status.value}, not active")
    if thread is Thread.T2 and not machine.protocol.threaded:
        raise ProtocolError(f"{machine.protocol.value} has no second thread")

    kind = machine.protocol
    if kind is ProtocolKind.ANONYMOUS:
        return _anonymous_step(machine, config, thread)
    if kind is ProtocolKind.SINGLE_REGISTER:
        return _single_register_step(machine, config)
    if kind is ProtocolKind.FOOTPRINT:
        return _footprint_step(machine, config)
    return _snapshot_step(machine, config, _entry_for(machine), _AFTER_SCAN[kind])


# --- Snapshot loop shared by ONE_SHOT, REPEATED and thread 1 of ANONYMOUS ---


def _entry_for(machine: ProcessMachine):
    if machine.protocol is ProtocolKind.ONE_SHOT:
        return Pair(machine.pref, machine.pid)
    if machine.protocol is ProtocolKind.REPEATED:
        return RepeatedTuple(machine.pref, machine.pid, machine.t, machine.history)
    return AnonymousTuple(machine.pref, machine.t, machine.history)


def _snapshot_step(machine, config, entry, after_scan) -> StepResult:
    if machine.pc is Pc.UPDATE:
        config = update(config, SNAPSHOT, machine.i, entry)
        pending = begin_collect(SNAPSHOT) if config.model.mode is SnapshotMode.DOUBLE_COLLECT else None
        machine = replace(machine, pc=Pc.SCAN, pending=pending, thread_focus=Thread.T1)
        return StepResult(machine, config, Effect(Primitive.UPDATE, SNAPSHOT, machine.i, entry))

    if machine.pc is not Pc.SCAN:
        raise ProtocolError(f"Process {machine.pid} has no snapshot step at {machine.pc.value}")

    if machine.pending is None:
        s = scan(config, SNAPSHOT)
        machine, decision = after_scan(replace(machine, thread_focus=Thread.T1), s)
        return StepResult(machine, config, Effect(Primitive.SCAN, SNAPSHOT, scan_result=s, decision=decision))

    position = machine.pending.position
    read = config.value(Cell(SNAPSHOT, position))
    progress = collect_step(config, machine.pending)
    if isinstance(progress, Done):
        machine, decision = after_scan(replace(machine, pending=None, thread_focus=Thread.T1), progress.vector)
        effect = Effect(Primitive.COLLECT, SNAPSHOT, position, read_value=read, scan_result=progress.vector,
                        decision=decision)
        return StepResult(machine, config, effect)
    machine = replace(machine, pending=progress, thread_focus=Thread.T1)
    return StepResult(machine, config, Effect(Primitive.COLLECT, SNAPSHOT, position, read_value=read))


def first_duplicate(s, eligible=lambda entry: True) -> int | None:
    """Smallest j1 such that some later j2 holds an identical eligible entry."""
    seen = {}
    best = None
    for j, entry in enumerate(s):
        if not eligible(entry):
            continue
        if entry in seen:
            first = seen[entry]
            if best is None or first < best:
                best = first
        else:
            seen[entry] = j
    return best


def _advance(machine: ProcessMachine) -> ProcessMachine:
    return replace(machine, i=(machine.i + 1) % machine.params.r, pc=Pc.UPDATE)


def _adopt_or_advance(machine: ProcessMachine, s: tuple, others_foreign: bool, j1: int | None):
    """Adopt the duplicated value and rewrite the same component, or move on.

    Re-adopting the value already held counts as keeping pref, so i advances.
    """
    if others_foreign and j1 is not None and s[j1].value != machine.pref:
        return replace(machine, pref=s[j1].value, pc=Pc.UPDATE), None
    return _advance(machine), None


def _one_shot_after_scan(machine: ProcessMachine, s: tuple):
    if BOT not in s and len(set(s)) <= machine.params.m:
        j1 = first_duplicate(s)
        assert j1 is not None, "r > m entries with at most m distinct must repeat"
        value = s[j1].value
        return _finish(machine, value), (DecisionKind.T_DECIDING, value)

    own = Pair(machine.pref, machine.pid)
    others_foreign = all(e is not BOT and e != own for j, e in enumerate(s) if j != machine.i)
    j1 = first_duplicate(s, lambda e: e is not BOT)
    return _adopt_or_advance(machine, s, others_foreign, j1)


def _adopt_higher(machine: ProcessMachine, s: tuple):
    """Adopt the history of the lowest-index entry from a later instance."""
    for e in s:
        if e is not BOT and e.t > machine.t:
            value = e.history[machine.t - 1]
            return _finish(machine, value, history=e.history), (DecisionKind.HISTORY_ADOPTED, value)
    return None


def _repeated_after_scan(machine: ProcessMachine, s: tuple):
    t = machine.t
    adopted = _adopt_higher(machine, s)
    if adopted is not None:
        return adopted

    def current(e):
        return e is not BOT and e.t == t

    if all(current(e) for e in s) and len(set(s)) <= machine.params.m:
        j1 = first_duplicate(s)
        assert j1 is not None, "r > m entries with at most m distinct must repeat"
        value = s[j1].value
        return _finish(machine, value, history=machine.history + (value,)), (DecisionKind.T_DECIDING, value)

    own = _entry_for(machine)
    others_foreign = all(current(e) and e != own for j, e in enumerate(s) if j != machine.i)
    j1 = first_duplicate(s, current)
    return _adopt_or_advance(machine, s, others_foreign, j1)


def _most_frequent(counts: Counter):
    """Value with the highest count, ties to the smallest value."""
    return min(counts, key=lambda v: (-counts[v], v))


def _anonymous_after_scan(machine: ProcessMachine, s: tuple):
    t = machine.t
    params = machine.params
    adopted = _adopt_higher(machine, s)
    if adopted is not None:
        return adopted

    if all(e is not BOT and e.t == t for e in s) and len(set(s)) <= params.m:
        value = _most_frequent(Counter(e.value for e in s))
        return _finish(machine, value, history=machine.history + (value,)), (DecisionKind.T_DECIDING, value)

    counts = Counter(e.value for e in s if e is not BOT and e.t == t)
    pref = machine.pref
    if counts[pref] < params.ell:
        frequent = Counter({v: c for v, c in counts.items() if c >= params.ell})
        if frequent:
            pref = _most_frequent(frequent)
    # i advances every iteration in the anonymous loop
    return replace(_advance(machine), pref=pref), None


_AFTER_SCAN = {
    ProtocolKind.ONE_SHOT: _one_shot_after_scan,
    ProtocolKind.REPEATED: _repeated_after_scan,
    ProtocolKind.ANONYMOUS: _anonymous_after_scan,
}


def _anonymous_step(machine: ProcessMachine, config: Configuration, thread: Thread) -> StepResult:
    if machine.pc is Pc.WRITE_H:
        # either thread performs the preamble write
        config = write_register(config, HISTORY_REGISTER, machine.history)
        effect = Effect(Primitive.WRITE, HISTORY_REGISTER, value_written=machine.history)
        machine = replace(machine, thread_focus=thread)
        if len(machine.history) >= machine.t:
            value = machine.history[machine.t - 1]
            return StepResult(_finish(machine, value), config,
                              replace(effect, decision=(DecisionKind.HISTORY_ADOPTED, value)))
        return StepResult(replace(machine, pc=Pc.UPDATE), config, effect)

    if thread is Thread.T2:
        h = read_register(config, HISTORY_REGISTER)
        effect = Effect(Primitive.READ, HISTORY_REGISTER, read_value=h)
        machine = replace(machine, thread_focus=Thread.T2)
        if len(h) >= machine.t:
            value = h[machine.t - 1]
            machine = _finish(machine, value, history=machine.history + (value,))
            return StepResult(machine, config, replace(effect, decision=(DecisionKind.H_ADOPTED, value)))
        return StepResult(machine, config, effect)

    return _snapshot_step(machine, config, _entry_for(machine), _anonymous_after_scan)


# --- Under-provisioned fixtures ---


def _register_name(machine: ProcessMachine) -> str:
    if machine.protocol is ProtocolKind.SINGLE_REGISTER:
        return SINGLE_REGISTER
    return f"{SINGLE_REGISTER}{machine.i}"


def _single_register_step(machine: ProcessMachine, config: Configuration) -> StepResult:
    name = _register_name(machine)
    t = machine.t
    if machine.pc is Pc.READ:
        x = read_register(config, name)
        effect = Effect(Primitive.READ, name, read_value=x)
        if x is not BOT and len(x.history) >= t:
            value = x.history[t - 1]
            return StepResult(_finish(machine, value, history=x.history), config,
                              replace(effect, decision=(DecisionKind.HISTORY_ADOPTED, value)))
        return StepResult(replace(machine, pc=Pc.WRITE), config, effect)

    history = machine.history + (machine.pref,)
    entry = AnonymousTuple(machine.pref, t, history)
    config = write_register(config, name, entry)
    effect = Effect(Primitive.WRITE, name, value_written=entry, decision=(DecisionKind.T_DECIDING, machine.pref))
    return StepResult(_finish(machine, machine.pref, history=history), config, effect)


def _footprint_step(machine: ProcessMachine, config: Configuration) -> StepResult:
    """Write R0, then for each later register read it and either adopt or write.

    A final read of R0 decides.
    """
    f = machine.params.r
    name = _register_name(machine)
    if machine.pc is Pc.WRITE:
        config = write_register(config, name, machine.pref)
        nxt = machine.i + 1
        machine = replace(machine, i=nxt % f, pc=Pc.READ if nxt < f else Pc.CHECK)
        return StepResult(machine, config, Effect(Primitive.WRITE, name, value_written=machine.pref))

    x = read_register(config, name)
    effect = Effect(Primitive.READ, name, read_value=x)
    if machine.pc is Pc.CHECK:
        return StepResult(_finish(machine, x), config, replace(effect, decision=(DecisionKind.T_DECIDING, x)))
    if x is not BOT:
        return StepResult(_finish(machine, x), config, replace(effect, decision=(DecisionKind.HISTORY_ADOPTED, x)))
    return StepResult(replace(machine, pc=Pc.WRITE), config, effect)
