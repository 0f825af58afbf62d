"""Adversarial executions behind the space lower bounds, built at desk scale.

Two constructions:

Covering and splicing (repeated agreement). Stage by stage, a set Q of
processes is run until some member is poised to write outside the covered
register set A. That member joins the coverers P and is replaced in Q by a
fresh process. When Q can no longer escape A, the coverers perform a block
write. Runs of each Q are then spliced in before the block writes that
obliterate them, and together they output k+1 values in one instance.

Clones and gluing (anonymous agreement). Solo-ish executions for disjoint
value sets that write the same register sequence are glued together. Clones
mirror a process step for step and are paused before its last write to a
register, so a later block write by the clones restores that register.

The "no fragment escapes A" test is undecidable in general; fragment_search
answers it exhaustively up to a depth cap and says whether the answer was
exhaustive.
"""

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from itertools import combinations

from .bounds import gluing_requirement
from .protocols import (
    ProcessMachine,
    ProtocolError,
    ProtocolKind,
    ProtocolParams,
    Status,
    Thread,
    initial_configuration,
    own_id_inputs,
    poised_cell,
)
from .scheduling import Schedule, Step, Trace, activate, can_step, run, step_once
from .shared_memory import Cell, Configuration, Primitive
from .verification import (
    NotFound,
    PropertyReport,
    check_k_agreement,
    find_m_value_witness,
    search_outputs,
    written_cells,
)

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_CAP = 2_000


class LockstepDivergence(ProtocolError):
    """A clone observed something different from the process it mirrors."""


# --- Fragment search ---


@dataclass(frozen=True)
class Covered:
    exhaustive: bool
    explored: int


@dataclass(frozen=True)
class Escape:
    fragment: tuple
    cell: Cell
    pid: int
    config: Configuration


def fragment_search(D: Configuration, Q, A, depth_cap: int = DEFAULT_DEPTH_CAP) -> Covered | Escape:
    """Breadth-first search over Q-only activations from D.

    Returns the shortest fragment after which some q in Q is poised to
    write a cell outside A, or Covered if none exists within depth_cap.
    """
    Q = tuple(sorted(Q))
    if not Q:
        raise ValueError("fragment_search needs at least one process")
    A = frozenset(A)
    parents = {D: None}
    frontier = deque([(D, 0)])
    exhaustive = True
    while frontier:
        config, depth = frontier.popleft()
        for q in Q:
            cell = poised_cell(config.machines[q])
            if cell is not None and cell not in A:
                return Escape(_path_to(parents, config), cell, q, config)
        movable = [q for q in Q if can_step(config, q)]
        if depth >= depth_cap:
            if movable:
                exhaustive = False
            continue
        for q in movable:
            nxt, _ = step_once(config, q)
            if nxt in parents:
                continue
            parents[nxt] = (config, q)
            frontier.append((nxt, depth + 1))
    return Covered(exhaustive, len(parents))


def _path_to(parents: dict, config: Configuration) -> tuple:
    path = []
    while parents[config] is not None:
        config, q = parents[config]
        path.append((q, Thread.T1))
    return tuple(reversed(path))


# --- Covering construction ---


@dataclass(frozen=True)
class CoveringState:
    j: int
    alpha: tuple
    D: Configuration
    P: tuple
    Q: tuple
    A: tuple
    beta: tuple
    C: Configuration
    exhaustive: bool
    growth: tuple = ()

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "alpha": [[pid, th.value] for pid, th in self.alpha],
            "P": list(self.P),
            "Q": list(self.Q),
            "A": [str(cell) for cell in self.A],
            "beta": [[pid, th.value] for pid, th in self.beta],
            "exhaustive": self.exhaustive,
            "growth": list(self.growth),
        }


@dataclass(frozen=True)
class Built:
    protocol: ProtocolKind
    params: ProtocolParams
    inputs: tuple
    stages: tuple
    final: Configuration

    def prefix(self, j: int) -> tuple:
        """Activations from the initial configuration to D_j."""
        acts = []
        for stage in self.stages[: j - 1]:
            acts.extend(stage.alpha)
            acts.extend(stage.beta)
        if j <= len(self.stages):
            acts.extend(self.stages[j - 1].alpha)
        return tuple(acts)


@dataclass(frozen=True)
class Stuck:
    stage: int
    reason: str


def build_covering(
    protocol: ProtocolKind,
    params: ProtocolParams,
    inputs=None,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    require_exhaustive: bool = False,
) -> Built | Stuck:
    """Build stages 1..c-1 of the covering execution.

    Q and the replacement q' are the lowest-index eligible pids. A Covered
    verdict that hit the depth cap is accepted unless require_exhaustive.
    """
    if not protocol.repeated:
        raise ValueError(f"Covering needs a repeated protocol, got {protocol.value}")
    n, k, m, c = params.n, params.k, params.m, params.c
    inputs = own_id_inputs(params) if inputs is None else tuple(tuple(seq) for seq in inputs)
    config = initial_configuration(protocol, params, inputs)
    earlier_q = set()
    stages = []

    for j in range(1, c):
        size = m if j > 1 else k + 1 - (c - 1) * m
        free = [p for p in range(n) if p not in earlier_q]
        if len(free) < size:
            return Stuck(j, f"need {size} processes outside earlier Q sets, have {len(free)}")
        Q = free[:size]
        P, A, alpha, growth = [], [], [], []
        D = config
        exhaustive = True
        while True:
            outcome = fragment_search(D, Q, A, depth_cap)
            if isinstance(outcome, Covered):
                if not outcome.exhaustive:
                    if require_exhaustive:
                        return Stuck(j, f"coverage of {[str(a) for a in A]} unresolved within depth {depth_cap}")
                    logger.info("Stage %d covered within depth %d only", j, depth_cap)
                exhaustive = outcome.exhaustive
                break
            alpha.extend(outcome.fragment)
            D = outcome.config
            taken = earlier_q | set(Q) | set(P)
            replacements = [p for p in range(n) if p not in taken]
            if not replacements:
                return Stuck(j, f"no process outside Q and P to replace {outcome.pid} poised at {outcome.cell}")
            A.append(outcome.cell)
            P.append(outcome.pid)
            Q = sorted((set(Q) - {outcome.pid}) | {replacements[0]})
            growth.append(len(A))
            logger.debug("Stage %d: %d poised at %s, A has %d cells", j, outcome.pid, outcome.cell, len(A))

        beta = tuple((p, Thread.T1) for p in P)
        C = D
        for p in P:
            C, _ = step_once(C, p)
        stages.append(CoveringState(j, tuple(alpha), D, tuple(P), tuple(Q), tuple(A), beta, C, exhaustive,
                                    tuple(growth)))
        earlier_q |= set(Q)
        config = C

    return Built(protocol, params, inputs, tuple(stages), config)


# --- Splicing ---


@dataclass
class Refutation:
    trace: Trace
    instance: int
    outputs: set
    schedule: tuple
    obliterated: list = field(default_factory=list)
    report: PropertyReport | None = None


def _complete_instances(config: Configuration, pids, s: int, depth_cap: int):
    """Run each pid solo, one after another, until it has output for instance s."""
    acts = []
    for q in sorted(pids):
        for _ in range(depth_cap):
            machine = config.machines[q]
            if machine.t >= s and not _running(machine):
                break
            config, _ = step_once(config, q)
            acts.append((q, Thread.T1))
        else:
            return None, config
    return acts, config


def _running(machine: ProcessMachine) -> bool:
    return machine.status is Status.ACTIVE


def splice_and_refute(
    covering: Built,
    s: int | None = None,
    depth_cap: int = 10_000,
) -> Refutation | NotFound:
    """Splice a run of each Q_j into the covering execution before β_j.

    Each run completes the first s instances solo and then has Q_j output
    |Q_j| distinct values for instance s+1. The whole execution is replayed
    and judged by the k-agreement checker.
    """
    if not covering.stages:
        raise ValueError("Covering has no stages; c >= 2 always yields at least one")
    params, protocol, inputs = covering.params, covering.protocol, covering.inputs
    if s is None:
        s = max(machine.t for machine in covering.final.machines)
    used = set().union(*(stage.Q for stage in covering.stages))
    last_q = [p for p in range(params.n) if p not in used][: params.m]
    if len(last_q) < params.m:
        return NotFound(f"only {len(last_q)} processes left for the last group", depth_cap)

    groups = [stage.Q for stage in covering.stages] + [tuple(last_q)]
    starts = [stage.D for stage in covering.stages] + [covering.final]
    for q in (q for group in groups for q in group):
        if len(inputs[q]) < s + 1:
            return NotFound(f"process {q} has {len(inputs[q])} inputs, instance {s + 1} needed", depth_cap)

    gammas = []
    for j, (Q, D) in enumerate(zip(groups, starts), start=1):
        solo, config = _complete_instances(D, Q, s, depth_cap)
        if solo is None:
            return NotFound(f"group {j} did not finish {s} instances within {depth_cap} steps", depth_cap)
        values = {inputs[q][s] for q in Q}
        tail = search_outputs(config, Q, values, depth_cap, instance=s + 1)
        if tail is None:
            return NotFound(f"group {j} found no run outputting {sorted(values)} in instance {s + 1}", depth_cap)
        gammas.append(tuple(solo) + tuple(tail))

    schedule = []
    marks = []
    for stage, gamma in zip(covering.stages, gammas):
        schedule.extend(stage.alpha)
        schedule.extend(gamma)
        schedule.extend(stage.beta)
        marks.append(len(schedule))
    schedule.extend(gammas[-1])

    trace = run(params, protocol, inputs, Schedule.scripted(schedule))
    obliterated = _obliteration(trace, covering, marks)
    report = check_k_agreement(trace, params.k)
    outputs = {e.value for e in trace.decisions if e.t == s + 1}
    logger.info("Spliced execution of %d steps, instance %d outputs %s", len(trace.steps), s + 1, sorted(outputs))
    if len(outputs) > params.k:
        return Refutation(trace, s + 1, outputs, tuple(schedule), obliterated, report)
    return NotFound(f"instance {s + 1} produced only {len(outputs)} outputs", depth_cap)


def _obliteration(trace: Trace, covering: Built, marks: list) -> list[bool]:
    """Whether the configuration after each β_j matches C_j outside Q_1..Q_j.

    Every group spliced in so far has run, so all of them are excluded.
    """
    config = trace.initial
    results = []
    spliced = set()
    pending = dict(zip(marks, covering.stages))
    for step in trace.steps:
        config, _ = activate(config, step.pid, step.thread, step.step_index)
        stage = pending.get(step.step_index + 1)
        if stage is not None:
            spliced |= set(stage.Q)
            results.append(config.project(spliced) == stage.C.project(spliced))
    return results


# --- Clones ---


@dataclass
class CloneWorld:
    base: Trace
    clones: dict
    paused: dict
    schedule: list
    config: Configuration
    inputs: tuple


def _mirror(protocol, params, inputs, activations, plan):
    """Replay activations with each clone stepping right after its original.

    plan holds (original, clone, pause_at): the clone mirrors every
    activation of the original at positions before pause_at.
    """
    config = initial_configuration(protocol, params, inputs)
    schedule, steps = [], []
    for pos, (pid, thread) in enumerate(activations):
        config, step = activate(config, pid, thread, len(schedule))
        schedule.append((pid, thread))
        steps.append(step)
        for original, clone, pause_at in plan:
            if original != pid or pos >= pause_at:
                continue
            config, twin = activate(config, clone, thread, len(schedule))
            schedule.append((clone, thread))
            steps.append(twin)
            if twin.observation() != step.observation():
                raise LockstepDivergence(f"clone {clone} of {pid} diverged at step {twin.step_index}")
            if config.machines[clone].anonymous_view() != config.machines[pid].anonymous_view():
                raise LockstepDivergence(f"clone {clone} of {pid} has a different local state at step {twin.step_index}")
    return config, schedule, steps


def _pending_write(config: Configuration, clone: int, expected: Step) -> Step:
    _, step = step_once(config, clone, expected.thread, expected.step_index)
    if step.written_cell != expected.written_cell or step.value_written != expected.value_written:
        raise LockstepDivergence(f"paused clone {clone} would write {step.written_cell}, not {expected.written_cell}")
    return step


def clone_lockstep(trace: Trace, pid: int, clone_pid: int, pause_at: int) -> CloneWorld:
    """Re-run trace with clone_pid mirroring pid, paused before step pause_at.

    pause_at must be a write by pid. The clone is left poised to perform
    that same write.
    """
    if not trace.protocol.anonymous:
        raise ValueError(f"Clones need an anonymous protocol, got {trace.protocol.value}")
    if trace.inputs[clone_pid] != trace.inputs[pid]:
        raise ValueError(f"Clone {clone_pid} has inputs {trace.inputs[clone_pid]}, original has {trace.inputs[pid]}")
    if any(step.pid == clone_pid and step.primitive is not Primitive.NOOP for step in trace.steps):
        raise ValueError(f"Clone {clone_pid} already takes steps in the trace")
    if not 0 <= pause_at < len(trace.steps):
        raise ValueError(f"pause_at {pause_at} outside the trace")
    target = trace.steps[pause_at]
    if target.pid != pid or target.written_cell is None:
        raise ValueError(f"Step {pause_at} is not a write by process {pid}")

    config, schedule, _ = _mirror(trace.protocol, trace.params, trace.inputs, trace.activations(),
                                  [(pid, clone_pid, pause_at)])
    paused = {clone_pid: _pending_write(config, clone_pid, target)}
    return CloneWorld(trace, {pid: [clone_pid]}, paused, schedule, config, trace.inputs)


def resume(world: CloneWorld, clone_pids=None) -> Configuration:
    """Let paused clones perform their pending writes as one block write."""
    config = world.config
    for clone in sorted(world.paused if clone_pids is None else clone_pids):
        config, _ = step_once(config, clone, world.paused[clone].thread)
    return config


# --- Gluing ---


@dataclass
class BetaChain:
    betas: list
    trace: Trace
    registers: tuple
    groups: tuple
    value_sets: tuple
    outputs: set
    report: PropertyReport


@dataclass(frozen=True)
class Blocked:
    stage: int
    reason: str


def build_glued(
    protocol: ProtocolKind,
    params: ProtocolParams,
    value_sets,
    depth_cap: int = 10_000,
) -> BetaChain | Blocked:
    """Glue witness executions for c disjoint value sets into one execution.

    Builds β_0..β_{i-1}, where i-1 is the length of the shared register
    sequence, checking at every stage that:
    1. exactly c*j*(j-1)/2 processes outside the groups take steps
    2. every group writes each of the first j registers
    3. nobody writes outside the first j registers
    4. each group observes exactly a prefix of its own witness execution
    """
    if not protocol.anonymous:
        raise ValueError(f"Gluing needs an anonymous protocol, got {protocol.value}")
    n, m, c = params.n, params.m, params.c
    sets = [tuple(sorted(V)) for V in value_sets]
    if len(sets) != c:
        raise ValueError(f"Need c = {c} value sets, got {len(sets)}")
    if any(len(V) != m or len(set(V)) != m for V in sets):
        raise ValueError(f"Every value set needs m = {m} distinct values")
    if len(set().union(*map(set, sets))) != m * c:
        raise ValueError("Value sets must be pairwise disjoint")

    witnesses = []
    for V in sets:
        found = find_m_value_witness(protocol, params, range(m), V, depth_cap)
        if isinstance(found, NotFound):
            return Blocked(0, f"no witness for {list(V)}: {found.reason}")
        witnesses.append(found)
    sequences = [tuple(written_cells(w)) for w in witnesses]
    if len(set(sequences)) > 1:
        shown = "; ".join(",".join(map(str, seq)) for seq in sequences)
        return Blocked(0, f"witnesses write different register sequences: {shown}")
    registers = sequences[0]
    writes = len(registers)
    need = gluing_requirement(writes, m, params.k)
    if need > n:
        return Blocked(0, f"gluing {writes} registers needs {need} processes, n={n}")

    groups = tuple(tuple(range(g * m, (g + 1) * m)) for g in range(c))
    witness_params = witnesses[0].params
    inputs = [(params.domain[0],) for _ in range(n)]
    for group, V in zip(groups, sets):
        for pid, v in zip(group, V):
            inputs[pid] = (v,)
    alpha_acts = [[(group[p], th) for p, th in w.activations()] for group, w in zip(groups, witnesses)]

    def cut(g: int, j: int) -> int:
        if j >= writes:
            return len(witnesses[g].steps)
        return next(x for x, step in enumerate(witnesses[g].steps) if step.written_cell == registers[j])

    beta = [act for g in range(c) for act in alpha_acts[g][: cut(g, 0)]]
    trace = run(witness_params, protocol, inputs, Schedule.scripted(beta))
    failure = _check_stage(0, trace, groups, registers, witnesses, cut, c)
    if failure:
        return Blocked(0, failure)
    betas = [tuple(beta)]
    next_free = m * c

    for j in range(1, writes + 1):
        plan = []
        for g, group in enumerate(groups):
            for cell in registers[: j - 1]:
                last = max(x for x, step in enumerate(trace.steps) if step.pid in group and step.written_cell == cell)
                original = trace.steps[last].pid
                inputs[next_free] = inputs[original]
                plan.append((g, original, next_free, last))
                next_free += 1
        try:
            _, schedule, _ = _mirror(protocol, witness_params, inputs, beta, [(o, cl, at) for _, o, cl, at in plan])
        except LockstepDivergence as exc:
            return Blocked(j, str(exc))
        for g in range(c):
            schedule.extend((clone, Thread.T1) for gg, _, clone, _ in plan if gg == g)
            schedule.extend(alpha_acts[g][cut(g, j - 1): cut(g, j)])
        beta = schedule
        trace = run(witness_params, protocol, inputs, Schedule.scripted(beta))
        failure = _check_stage(j, trace, groups, registers, witnesses, cut, c)
        if failure:
            return Blocked(j, failure)
        betas.append(tuple(beta))
        logger.debug("Glued stage %d: %d steps, %d clones", j, len(beta), next_free - m * c)

    report = check_k_agreement(trace, params.k)
    outputs = {e.value for e in trace.decisions if e.t == 1}
    if len(outputs) <= params.k:
        return Blocked(writes, f"glued execution output only {sorted(outputs)}")
    return BetaChain(betas, trace, registers, groups, tuple(sets), outputs, report)


def _check_stage(j, trace, groups, registers, witnesses, cut, c) -> str | None:
    members = {p for group in groups for p in group}
    movers = {step.pid for step in trace.steps if step.primitive is not Primitive.NOOP}
    outsiders = movers - members
    if len(outsiders) != c * j * (j - 1) // 2:
        return f"{len(outsiders)} processes outside the groups took steps, expected {c * j * (j - 1) // 2}"
    allowed = set(registers[:j])
    for g, group in enumerate(groups):
        for cell in registers[:j]:
            if not any(step.pid in group and step.written_cell == cell for step in trace.steps):
                return f"group {g} never wrote {cell}"
    for step in trace.steps:
        if step.written_cell is not None and step.written_cell not in allowed:
            return f"step {step.step_index} wrote {step.written_cell} outside the first {j} registers"
    for g, group in enumerate(groups):
        seen = [(step.pid, step.observation()) for step in trace.steps if step.pid in group]
        expected = [(group[step.pid], step.observation()) for step in witnesses[g].steps[: cut(g, j)]]
        if seen != expected:
            return f"group {g} observed something its own witness did not"
    return None


@dataclass(frozen=True)
class GlueFamily:
    registers: tuple
    value_sets: tuple


def find_glue_family(
    protocol: ProtocolKind,
    params: ProtocolParams,
    depth_cap: int = 10_000,
    domain=None,
) -> GlueFamily | None:
    """Find c disjoint m-value sets whose witnesses write one register sequence."""
    domain = tuple(params.domain if domain is None else domain)
    by_sequence = defaultdict(list)
    for V in combinations(domain, params.m):
        found = find_m_value_witness(protocol, params, range(params.m), V, depth_cap)
        if isinstance(found, NotFound):
            continue
        by_sequence[tuple(written_cells(found))].append(V)
    for registers, candidates in by_sequence.items():
        chosen, used = [], set()
        for V in candidates:
            if used.isdisjoint(V):
                chosen.append(V)
                used.update(V)
        if len(chosen) >= params.c:
            return GlueFamily(registers, tuple(chosen[: params.c]))
    return None
