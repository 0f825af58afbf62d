"""Shared memory: multi-writer registers and r-component snapshot objects.

A configuration is an immutable value holding every memory cell plus every
process's local state. All operations here are pure: they return a new
configuration (or an observation) and never touch their input.

Two snapshot realizations are supported:
- ATOMIC: scan returns the whole component vector in one step
- DOUBLE_COLLECT: scan is driven one component read at a time by
  `collect_step` and completes after two identical consecutive collects
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, NamedTuple


class _Bot:
    """Initial value of every snapshot component. Equal only to itself."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "⊥"

    def __reduce__(self):
        return (_Bot, ())


BOT = _Bot()

RegisterValue = Any


class SnapshotMode(str, Enum):
    ATOMIC = "atomic"
    DOUBLE_COLLECT = "double-collect"


class Primitive(str, Enum):
    """The shared-memory primitive a step performs."""

    UPDATE = "update"  # write one snapshot component
    SCAN = "scan"  # atomic scan of a snapshot object
    COLLECT = "collect"  # one component read inside a double collect
    READ = "read"  # plain register read
    WRITE = "write"  # plain register write
    INVOKE = "invoke"  # invocation that output without touching memory
    NOOP = "noop"  # activation of a halted process


class Cell(NamedTuple):
    """Address of one register: a snapshot component or a plain register."""

    obj: str
    index: int | None = None

    def __str__(self):
        return self.obj if self.index is None else f"{self.obj}[{self.index}]"


@dataclass(frozen=True)
class SnapshotObject:
    """Read-only view of one snapshot object inside a configuration."""

    name: str
    mode: SnapshotMode
    components: tuple

    @property
    def r(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class MemoryModel:
    """Layout of shared memory: named snapshot objects and plain registers.

    Every snapshot component and every plain register is one cell, and the
    register budget is the number of cells.
    """

    snapshots: tuple[tuple[str, int], ...] = ()
    registers: tuple[tuple[str, RegisterValue], ...] = ()
    mode: SnapshotMode = SnapshotMode.ATOMIC

    @cached_property
    def cells(self) -> tuple[Cell, ...]:
        cells = [Cell(name, i) for name, r in self.snapshots for i in range(r)]
        cells.extend(Cell(name) for name, _ in self.registers)
        return tuple(cells)

    @cached_property
    def _offsets(self) -> dict[Cell, int]:
        return {cell: pos for pos, cell in enumerate(self.cells)}

    @cached_property
    def _sizes(self) -> dict[str, int]:
        return dict(self.snapshots)

    @property
    def register_budget(self) -> int:
        return len(self.cells)

    def size(self, obj: str) -> int:
        """Component count of a snapshot object."""
        if obj not in self._sizes:
            raise KeyError(f"Unknown snapshot object: {obj}")
        return self._sizes[obj]

    def offset(self, cell: Cell) -> int:
        if cell.index is not None:
            r = self.size(cell.obj)
            if not 0 <= cell.index < r:
                raise IndexError(f"Component {cell.index} out of range for {cell.obj} (r={r})")
        try:
            return self._offsets[cell]
        except KeyError:
            raise KeyError(f"Unknown register: {cell}") from None

    def snapshot_slice(self, obj: str) -> slice:
        start = self.offset(Cell(obj, 0))
        return slice(start, start + self.size(obj))

    def initial_memory(self) -> tuple:
        values = [BOT] * sum(r for _, r in self.snapshots)
        values.extend(initial for _, initial in self.registers)
        return tuple(values)


@dataclass(frozen=True)
class Configuration:
    """Global state: memory cells plus the local state of every process.

    `tags` counts writes per cell. It is the sequence number a tagged
    collect compares, and it is excluded from equality and hashing so that
    configurations compare by observable contents only.
    """

    model: MemoryModel = field(compare=False, repr=False)
    memory: tuple
    machines: tuple = ()
    tags: tuple = field(default=(), compare=False, repr=False)

    def value(self, cell: Cell) -> RegisterValue:
        return self.memory[self.model.offset(cell)]

    def tag(self, cell: Cell) -> int:
        return self.tags[self.model.offset(cell)]

    def with_machine(self, pid: int, machine) -> "Configuration":
        machines = list(self.machines)
        machines[pid] = machine
        return replace(self, machines=tuple(machines))

    def project(self, excluding=()) -> tuple:
        """Memory and the local states of processes not in `excluding`."""
        hidden = set(excluding)
        kept = tuple(m for pid, m in enumerate(self.machines) if pid not in hidden)
        return (self.memory, kept)


def initial_configuration(model: MemoryModel, machines=()) -> Configuration:
    memory = model.initial_memory()
    return Configuration(model, memory, tuple(machines), (0,) * len(memory))


def _write(config: Configuration, cell: Cell, value: RegisterValue) -> Configuration:
    pos = config.model.offset(cell)
    memory = list(config.memory)
    memory[pos] = value
    tags = list(config.tags)
    tags[pos] += 1
    return replace(config, memory=tuple(memory), tags=tuple(tags))


def update(config: Configuration, obj: str, i: int, v: RegisterValue) -> Configuration:
    """Write v into component i of snapshot object obj."""
    return _write(config, Cell(obj, i), v)


def scan(config: Configuration, obj: str) -> tuple:
    """Atomic scan: the component vector of obj in this configuration."""
    return config.memory[config.model.snapshot_slice(obj)]


def snapshot_object(config: Configuration, obj: str) -> SnapshotObject:
    return SnapshotObject(obj, config.model.mode, scan(config, obj))


def read_component(config: Configuration, obj: str, i: int) -> RegisterValue:
    return config.value(Cell(obj, i))


def write_register(config: Configuration, name: str, v: RegisterValue) -> Configuration:
    return _write(config, Cell(name), v)


def read_register(config: Configuration, name: str) -> RegisterValue:
    return config.value(Cell(name))


@dataclass(frozen=True)
class CollectState:
    """A double-collect scan in progress.

    `current` holds the (value, tag) pairs read so far in this collect and
    `previous` the last complete collect, if any.
    """

    obj: str
    previous: tuple | None = None
    current: tuple = ()

    @property
    def position(self) -> int:
        return len(self.current)


@dataclass(frozen=True)
class Done:
    """A double collect that completed with this component vector."""

    vector: tuple


def begin_collect(obj: str) -> CollectState:
    return CollectState(obj)


def collect_step(config: Configuration, state: CollectState) -> CollectState | Done:
    """Perform one atomic component read of a double-collect scan.

    Returns Done once two consecutive complete collects read identical
    (value, tag) vectors, otherwise the advanced in-progress state. A write
    by anyone between the collects makes them differ, and the newer collect
    becomes the one the next collect is compared against.
    """
    r = config.model.size(state.obj)
    cell = Cell(state.obj, state.position)
    current = state.current + ((config.value(cell), config.tag(cell)),)
    if len(current) < r:
        return replace(state, current=current)
    if current == state.previous:
        return Done(tuple(value for value, _ in current))
    return CollectState(state.obj, previous=current)
