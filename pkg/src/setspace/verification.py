"""Trace checkers for set agreement and its supporting invariants.

Checkers are pure functions over a finished Trace, so one trace can feed
every property. Each returns a PropertyReport whose Fail verdict carries the
earliest violating step index.

The module also hosts the m-value witness search: a bounded search for an
execution in which only the processes in Q take steps and together output
every value in V.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum

from .protocols import DecisionKind, ProtocolKind, ProtocolParams, Status, Thread, initial_configuration
from .scheduling import Schedule, ScheduleKind, Trace, activate, encode_value, run, step_once
from .shared_memory import BOT, Cell, Configuration, Primitive

logger = logging.getLogger(__name__)

SNAPSHOT = "A"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass
class PropertyReport:
    name: str
    verdict: Verdict
    step_index: int | None = None
    explanation: str = ""
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    @property
    def failed(self) -> bool:
        return self.verdict is Verdict.FAIL

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict.value,
            "step_index": self.step_index,
            "explanation": self.explanation,
            "inputs": {str(t): sorted(encode_value(v) for v in vs) for t, vs in self.inputs.items()},
            "outputs": {str(t): sorted(encode_value(v) for v in vs) for t, vs in self.outputs.items()},
        }


def _pass(name, explanation="", **kwargs) -> PropertyReport:
    return PropertyReport(name, Verdict.PASS, explanation=explanation, **kwargs)


def _fail(name, step_index, explanation, **kwargs) -> PropertyReport:
    return PropertyReport(name, Verdict.FAIL, step_index, explanation, **kwargs)


def _inconclusive(name, explanation, **kwargs) -> PropertyReport:
    return PropertyReport(name, Verdict.INCONCLUSIVE, explanation=explanation, **kwargs)


def _memory_after_steps(trace: Trace):
    """Yield (step, memory) with memory as it stands after each step."""
    model = trace.initial.model
    memory = list(trace.initial.memory)
    for step in trace.steps:
        cell = step.written_cell
        if cell is not None:
            memory[model.offset(cell)] = step.value_written
        yield step, memory


def _snapshot_entries(trace: Trace, memory) -> list:
    return memory[trace.initial.model.snapshot_slice(SNAPSHOT)]


# --- Set agreement properties ---


def check_validity(trace: Trace) -> PropertyReport:
    """Every output for instance t is some process's instance-t input."""
    inputs = defaultdict(set)
    outputs = defaultdict(set)
    for step in trace.steps:
        if step.invoked is not None:
            inputs[step.invoked].add(trace.inputs[step.pid][step.invoked - 1])
        for event in step.events:
            outputs[event.t].add(event.value)
            if event.value not in inputs[event.t]:
                return _fail(
                    "validity",
                    step.step_index,
                    f"process {event.pid} output {event.value!r} in instance {event.t}, "
                    f"inputs so far {sorted(inputs[event.t])}",
                    inputs=dict(inputs),
                    outputs=dict(outputs),
                )
    return _pass("validity", inputs=dict(inputs), outputs=dict(outputs))


def check_k_agreement(trace: Trace, k: int) -> PropertyReport:
    """At most k distinct outputs per instance."""
    outputs = defaultdict(set)
    for step in trace.steps:
        for event in step.events:
            outputs[event.t].add(event.value)
            if len(outputs[event.t]) > k:
                return _fail(
                    "k-agreement",
                    step.step_index,
                    f"instance {event.t} has {len(outputs[event.t])} outputs, k={k}",
                    outputs=dict(outputs),
                )
    return _pass("k-agreement", outputs=dict(outputs))


def check_m_of_termination(trace: Trace, schedule: Schedule) -> PropertyReport:
    """Every survivor of an eventually m-bounded schedule completes all its operations."""
    if schedule.kind is not ScheduleKind.EVENTUALLY_M_BOUNDED:
        raise ValueError(f"Termination is only judged under m-bounded schedules, got {schedule.kind.value}")
    if trace.truncated:
        return _inconclusive("termination", f"truncated at {len(trace.steps)} steps")
    final = trace.final if trace.final is not None else trace.initial
    for pid in sorted(schedule.survivors):
        machine = final.machines[pid]
        if machine.status is not Status.HALTED:
            return _fail(
                "termination",
                len(trace.steps),
                f"survivor {pid} is {machine.status.value} after {machine.t} of {len(machine.inputs)} instances",
            )
    return _pass("termination", f"survivors {sorted(schedule.survivors)} completed")


# --- Protocol invariants ---


def monitor_single_value_per_id(trace: Trace) -> PropertyReport:
    """Entries in the snapshot that share an identifier agree.

    One-shot: all pairs with the same pid carry the same value. Repeated:
    all tuples with the same (pid, t) are identical.
    """
    name = "single-value-per-id"
    if trace.protocol is ProtocolKind.ONE_SHOT:
        def key(e):
            return e.pid
    elif trace.protocol is ProtocolKind.REPEATED:
        def key(e):
            return (e.pid, e.t)
    else:
        return _inconclusive(name, f"{trace.protocol.value} entries carry no identifier")

    for step, memory in _memory_after_steps(trace):
        if step.primitive is not Primitive.UPDATE:
            continue
        seen = {}
        for e in _snapshot_entries(trace, memory):
            if e is BOT:
                continue
            if key(e) in seen and seen[key(e)] != e:
                return _fail(name, step.step_index, f"identifier {key(e)} holds {seen[key(e)]} and {e}")
            seen[key(e)] = e
    return _pass(name)


def _final_t_deciders(trace: Trace) -> dict:
    """instance t -> [(step, event)] of t-deciding outputs, in step order."""
    deciders = defaultdict(list)
    for step in trace.steps:
        for event in step.events:
            if event.kind is DecisionKind.T_DECIDING:
                deciders[event.t].append((step, event))
    return deciders


def monitor_late_deciders(trace: Trace, params: ProtocolParams) -> PropertyReport:
    """Late t-deciders agree on at most m values, fixed by q0's final scan.

    Let l = n-k+m and q0 be the (n-l+1)-th t-deciding process of instance t.
    The values V in q0's final scan number at most m, q0 and every later
    t-decider output a value in V, and from q0's final scan on:
    - one-shot and repeated: no entry of instance t with a value outside V
      occupies two components
    - anonymous: at most l-1 entries of instance t carry a value outside V
    """
    name = "late-deciders"
    if trace.protocol not in (ProtocolKind.ONE_SHOT, ProtocolKind.REPEATED, ProtocolKind.ANONYMOUS):
        return _inconclusive(name, f"{trace.protocol.value} is not a snapshot protocol")
    ell = params.n - params.k + params.m
    position = params.n - ell
    deciders = _final_t_deciders(trace)
    anchors = {}
    for t, decided in deciders.items():
        if len(decided) <= position:
            continue
        q0_step, _ = decided[position]
        if q0_step.scan_result is None:
            continue
        values = {e.value for e in q0_step.scan_result if e is not BOT}
        if len(values) > params.m:
            return _fail(name, q0_step.step_index, f"instance {t}: final scan of q0 holds {len(values)} values")
        for step, event in decided[position:]:
            if event.value not in values:
                return _fail(name, step.step_index,
                             f"instance {t}: late decider {event.pid} output {event.value!r} outside {sorted(values)}")
        anchors[t] = (q0_step.step_index, values)
    if not anchors:
        return _inconclusive(name, f"no instance had more than {position} t-deciding processes")

    for step, memory in _memory_after_steps(trace):
        if step.primitive is not Primitive.UPDATE:
            continue
        entries = _snapshot_entries(trace, memory)
        for t, (start, values) in anchors.items():
            if step.step_index <= start:
                continue
            outside = [e for e in entries if e is not BOT and _instance_of(trace, e) == t and e.value not in values]
            if trace.protocol is ProtocolKind.ANONYMOUS:
                if len(outside) > ell - 1:
                    return _fail(name, step.step_index,
                                 f"instance {t}: {len(outside)} entries outside {sorted(values)}, limit {ell - 1}")
            else:
                repeated = [e for e, count in Counter(outside).items() if count >= 2]
                if repeated:
                    return _fail(name, step.step_index, f"instance {t}: {repeated[0]} occupies two components")
    return _pass(name, f"checked instances {sorted(anchors)}")


def _instance_of(trace: Trace, entry) -> int:
    return 1 if trace.protocol is ProtocolKind.ONE_SHOT else entry.t


def check_adoption(trace: Trace) -> PropertyReport:
    """Every adopted output for instance t equals some t-deciding output for t."""
    deciding = defaultdict(set)
    for event in trace.decisions:
        if event.kind is DecisionKind.T_DECIDING:
            deciding[event.t].add(event.value)
    for event in trace.decisions:
        if event.kind is not DecisionKind.T_DECIDING and event.value not in deciding[event.t]:
            return _fail("adoption", event.step_index,
                         f"process {event.pid} adopted {event.value!r} in instance {event.t}, "
                         f"t-deciding outputs {sorted(deciding[event.t])}")
    return _pass("adoption")


def check_register_usage(trace: Trace) -> PropertyReport:
    """The trace touches every cell of the memory model and nothing else."""
    name = "register-usage"
    model = trace.initial.model
    touched = set()
    for step in trace.steps:
        if step.primitive is Primitive.SCAN:
            touched.update(c for c in model.cells if c.obj == step.object)
        elif step.primitive in (Primitive.UPDATE, Primitive.WRITE, Primitive.COLLECT, Primitive.READ):
            touched.add(step.written_cell or _read_cell(step))
    cells = set(model.cells)
    detail = f"touched {len(touched)} of {len(cells)} cells"
    if touched == cells:
        return _pass(name, detail)
    if touched - cells:
        return _fail(name, None, f"touched cells outside the model: {sorted(map(str, touched - cells))}")
    if not any(e.kind is DecisionKind.T_DECIDING for e in trace.decisions):
        return _inconclusive(name, detail + ", nobody t-decided")
    return _fail(name, None, detail + f", untouched {sorted(map(str, cells - touched))}")


def _read_cell(step):
    return Cell(step.object, step.component)


def replay(trace: Trace) -> PropertyReport:
    """Re-execute the recorded activations and compare every observation."""
    config = trace.initial
    for step in trace.steps:
        config, again = activate(config, step.pid, step.thread, step.step_index)
        if again != step:
            return _fail("replay", step.step_index, f"recorded {step.primitive.value} step differs on replay")
    if trace.final is not None and config != trace.final:
        return _fail("replay", len(trace.steps), "final configuration differs on replay")
    return _pass("replay", f"{len(trace.steps)} steps reproduced")


def check_collect_linearizability(trace: Trace) -> PropertyReport:
    """Every completed double collect equals memory at some point during it."""
    name = "collect-linearizability"
    slot = trace.initial.model.snapshot_slice(SNAPSHOT) if trace.initial.model.snapshots else None
    if slot is None:
        return _inconclusive(name, "no snapshot object")
    history = [tuple(trace.initial.memory[slot])]
    for _, memory in _memory_after_steps(trace):
        history.append(tuple(memory[slot]))

    completed = 0
    first_read = {}
    for step in trace.steps:
        if step.thread is Thread.T2 and step.primitive is not Primitive.WRITE:
            continue
        if step.primitive is not Primitive.COLLECT:
            first_read.pop(step.pid, None)
            continue
        start = first_read.setdefault(step.pid, step.step_index)
        if step.scan_result is None:
            continue
        completed += 1
        first_read.pop(step.pid)
        # history[x] is memory before step x; the window spans the scan's reads
        if not any(history[x] == step.scan_result for x in range(start, step.step_index + 2)):
            return _fail(name, step.step_index,
                         f"process {step.pid} collected a vector memory never held during steps "
                         f"{start}..{step.step_index}")
    if not completed:
        return _inconclusive(name, "no completed double collect")
    return _pass(name, f"{completed} collects linearized")


# --- m-value witness search ---


@dataclass(frozen=True)
class NotFound:
    reason: str
    depth_cap: int


def _target_instance(config: Configuration, pids) -> int:
    return max((config.machines[p].t for p in pids), default=0) + 1


def search_outputs(
    start: Configuration,
    pids,
    values,
    depth_cap: int,
    instance: int | None = None,
) -> list[tuple[int, Thread]] | None:
    """Activations of `pids` only, from `start`, after which every pid has
    output for `instance` and together they output exactly `values`.

    Iterative deepening DFS. A configuration already explored with at least
    as much remaining depth is skipped, and a branch dies as soon as a pid
    outputs a value outside `values` or one already output.
    """
    pids = tuple(sorted(pids))
    values = frozenset(values)
    if instance is None:
        instance = _target_instance(start, pids)
    if depth_cap <= 0:
        return None

    def outputs(config):
        result = {}
        for p in pids:
            m = config.machines[p]
            if m.t == instance and m.status is not Status.ACTIVE and m.status is not Status.IDLE:
                result[p] = m.output
        return result

    def dead(config):
        out = outputs(config)
        seen = list(out.values())
        return any(v not in values for v in seen) or len(set(seen)) < len(seen)

    def eligible(config, p):
        m = config.machines[p]
        if m.status is Status.ACTIVE:
            return True
        return m.has_next_instance and m.t < instance

    def goal(config):
        out = outputs(config)
        return len(out) == len(pids) and set(out.values()) == values

    limit = min(depth_cap, 16)
    while True:
        found, exhausted = _bounded_dfs(start, pids, goal, dead, eligible, limit)
        if found is not None:
            logger.debug("Witness of %d steps for %s -> %s", len(found), pids, sorted(values))
            return found
        if exhausted or limit >= depth_cap:
            return None
        limit = min(depth_cap, limit * 2)


def _bounded_dfs(start, pids, goal, dead, eligible, limit):
    """Depth-limited DFS. Returns (path or None, whether the space was exhausted below the limit)."""
    if goal(start):
        return [], True
    if dead(start):
        return None, True
    best = {start: limit}
    exhausted = True
    # each frame: (config, remaining depth, children iterator)
    stack = [(start, limit, iter(_ordered(pids, None)))]
    path = []
    while stack:
        config, remaining, children = stack[-1]
        advanced = False
        for p in children:
            if not eligible(config, p):
                continue
            if remaining == 0:
                exhausted = False
                break
            nxt, _ = step_once(config, p, Thread.T1)
            left = remaining - 1
            if best.get(nxt, -1) >= left:
                continue
            best[nxt] = left
            if goal(nxt):
                return path + [(p, Thread.T1)], False
            if dead(nxt):
                continue
            path.append((p, Thread.T1))
            stack.append((nxt, left, iter(_ordered(pids, p))))
            advanced = True
            break
        if not advanced:
            stack.pop()
            if path:
                path.pop()
    return None, exhausted


def _ordered(pids, last):
    """Continue the last activated pid first, then the rest in pid order."""
    if last is None:
        return pids
    return (last,) + tuple(p for p in pids if p != last)


def find_m_value_witness(
    protocol: ProtocolKind,
    params: ProtocolParams,
    Q,
    V,
    depth_cap: int = 10_000,
) -> Trace | NotFound:
    """Search for an execution where only Q takes steps and all of V is output.

    The i-th smallest pid of Q proposes the i-th smallest value of V; other
    processes never move.
    """
    Q = sorted(set(Q))
    V = sorted(set(V))
    if len(Q) != params.m or len(V) != params.m:
        raise ValueError(f"Need |Q| = |V| = m = {params.m}, got |Q|={len(Q)} |V|={len(V)}")
    for v in V:
        if v not in params.domain:
            raise ValueError(f"Value {v!r} is outside the domain")
    if depth_cap <= 0:
        return NotFound("depth cap is zero", depth_cap)

    assignment = dict(zip(Q, V))
    filler = params.domain[0]
    inputs = tuple((assignment.get(pid, filler),) for pid in range(params.n))
    witness_params = params if params.s_instances == 1 else _one_instance(params)
    start = initial_configuration(protocol, witness_params, inputs)
    found = search_outputs(start, Q, V, depth_cap, instance=1)
    if found is None:
        return NotFound(f"no witness for Q={Q} V={V} within {depth_cap} steps", depth_cap)
    return run(witness_params, protocol, inputs, Schedule.scripted(found))


def _one_instance(params: ProtocolParams) -> ProtocolParams:
    return replace(params, s_instances=1)


def written_cells(trace: Trace) -> list:
    """Distinct cells written, in order of first write."""
    order = []
    for step in trace.steps:
        cell = step.written_cell
        if cell is not None and cell not in order:
            order.append(cell)
    return order
