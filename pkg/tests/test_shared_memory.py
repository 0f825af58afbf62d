"""Tests for registers, snapshot objects and the double collect."""

import copy

import pytest
from hypothesis import given
from hypothesis import strategies as st

from setspace.shared_memory import (
    BOT,
    Cell,
    CollectState,
    Done,
    MemoryModel,
    begin_collect,
    collect_step,
    initial_configuration,
    read_component,
    read_register,
    scan,
    snapshot_object,
    update,
    write_register,
)


def fresh(r=3, registers=()):
    return initial_configuration(MemoryModel(snapshots=(("A", r),), registers=registers))


def test_bot_is_a_singleton():
    assert copy.deepcopy(BOT) is BOT
    assert repr(BOT) == "⊥"
    assert BOT != ()
    assert BOT is not None


def test_update_writes_one_component():
    config = fresh()
    after = update(config, "A", 1, (5, 2))
    assert scan(after, "A") == (BOT, (5, 2), BOT)
    assert scan(config, "A") == (BOT, BOT, BOT)


def test_last_update_wins():
    config = update(update(fresh(), "A", 0, "x"), "A", 0, "y")
    assert read_component(config, "A", 0) == "y"


def test_update_out_of_range():
    with pytest.raises(IndexError):
        update(fresh(), "A", 3, "x")


def test_scan_unknown_object():
    with pytest.raises(KeyError):
        scan(fresh(), "B")


def test_fresh_scan_is_all_bot():
    assert scan(fresh(), "A") == (BOT,) * 3


def test_snapshot_object_view():
    view = snapshot_object(update(fresh(), "A", 2, 7), "A")
    assert view.r == 3
    assert view.components[2] == 7


def test_history_register_starts_empty():
    config = fresh(registers=(("H", ()),))
    assert read_register(config, "H") == ()
    config = write_register(config, "H", ("a",))
    assert read_register(config, "H") == ("a",)
    config = write_register(config, "H", ("a", "b"))
    assert read_register(config, "H") == ("a", "b")


def test_unknown_register():
    with pytest.raises(KeyError):
        read_register(fresh(), "H")


def test_register_budget_counts_components_and_registers():
    model = MemoryModel(snapshots=(("A", 5),), registers=(("H", ()),))
    assert model.register_budget == 6
    assert model.cells[-1] == Cell("H")
    assert str(model.cells[0]) == "A[0]"


def test_writes_bump_tags_but_not_equality():
    config = fresh()
    rewritten = update(config, "A", 0, BOT)
    assert rewritten == config
    assert rewritten.tag(Cell("A", 0)) == 1


def test_collect_without_writers_takes_two_collects():
    config = fresh(r=2)
    state = begin_collect("A")
    results = []
    for _ in range(4):
        state = collect_step(config, state)
        results.append(state)
    assert all(isinstance(s, CollectState) for s in results[:3])
    assert results[3] == Done((BOT, BOT))


def test_collect_starves_under_constant_writes():
    config = fresh(r=2)
    state = begin_collect("A")
    for x in range(200):
        state = collect_step(config, state)
        assert not isinstance(state, Done)
        config = update(config, "A", x % 2, x % 3)


def test_collect_finishes_after_writer_quiesces():
    config = fresh(r=3)
    state = begin_collect("A")
    for x in range(10):
        state = collect_step(config, state)
        config = update(config, "A", 0, x)
    for reads in range(1, 3 * 3 + 1):
        state = collect_step(config, state)
        if isinstance(state, Done):
            break
    assert isinstance(state, Done)
    assert state.vector == (9, BOT, BOT)


def test_rewriting_same_value_restarts_collect():
    config = fresh(r=1)
    state = collect_step(config, begin_collect("A"))
    config = update(config, "A", 0, BOT)
    state = collect_step(config, state)
    assert isinstance(state, CollectState)
    assert isinstance(collect_step(config, state), Done)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 5)), max_size=12))
def test_operations_are_pure(writes):
    config = fresh()
    for i, v in writes:
        before = config
        once = update(config, "A", i, v)
        twice = update(config, "A", i, v)
        assert once == twice
        assert once.tags == twice.tags
        assert config == before
        config = once
    assert scan(config, "A") == scan(config, "A")
    assert config.model.register_budget == 3
