"""Tests for covering, splicing, clones and gluing."""

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from setspace.adversary import (
    BetaChain,
    Blocked,
    Built,
    Covered,
    Escape,
    Refutation,
    Stuck,
    build_covering,
    build_glued,
    clone_lockstep,
    find_glue_family,
    fragment_search,
    resume,
    splice_and_refute,
)
from setspace.protocols import ProtocolKind, ProtocolParams, Thread, initial_configuration
from setspace.scheduling import Schedule, run
from setspace.shared_memory import Cell, Primitive, read_register
from setspace.verification import NotFound, check_k_agreement, replay


def footprint(n=2, f=2):
    return ProtocolParams.for_protocol(ProtocolKind.FOOTPRINT, n=n, k=1, m=1, r=f)


def test_fragment_escapes_to_fresh_register():
    params = footprint()
    start = initial_configuration(ProtocolKind.FOOTPRINT, params, ((0,), (1,)))
    outcome = fragment_search(start, [0], [Cell("R0")])
    assert isinstance(outcome, Escape)
    assert len(outcome.fragment) == 2
    assert outcome.cell == Cell("R1")
    assert outcome.pid == 0


def test_fragment_covered_exhaustively():
    params = footprint(f=1)
    start = initial_configuration(ProtocolKind.FOOTPRINT, params, ((0,), (1,)))
    outcome = fragment_search(start, [0, 1], [Cell("R0")])
    assert isinstance(outcome, Covered)
    assert outcome.exhaustive


def test_fragment_search_depth_cap():
    params = footprint(f=1)
    start = initial_configuration(ProtocolKind.FOOTPRINT, params, ((0,), (1,)))
    outcome = fragment_search(start, [0, 1], [Cell("R0")], depth_cap=1)
    assert outcome == Covered(exhaustive=False, explored=outcome.explored)
    with pytest.raises(ValueError):
        fragment_search(start, [], [])


def test_covering_single_register(single_register_params):
    built = build_covering(ProtocolKind.SINGLE_REGISTER, single_register_params)
    assert isinstance(built, Built)
    (stage,) = built.stages
    assert stage.alpha == ((0, Thread.T1),)
    assert stage.P == (0,)
    assert stage.Q == (1,)
    assert stage.A == (Cell("R"),)
    assert stage.exhaustive
    assert stage.growth == (1,)
    assert built.prefix(1) == ((0, Thread.T1),)
    assert stage.to_dict()["A"] == ["R"]


def test_covering_stuck_when_registers_suffice():
    params = ProtocolParams.for_protocol(ProtocolKind.REPEATED, n=2, k=1, m=1, s_instances=2)
    outcome = build_covering(ProtocolKind.REPEATED, params)
    assert isinstance(outcome, Stuck)
    assert outcome.stage == 1


def test_covering_needs_repeated_protocol():
    with pytest.raises(ValueError):
        build_covering(ProtocolKind.FOOTPRINT, footprint())


def test_splice_refutes_single_register(single_register_params):
    built = build_covering(ProtocolKind.SINGLE_REGISTER, single_register_params)
    refutation = splice_and_refute(built)
    assert isinstance(refutation, Refutation)
    assert refutation.instance == 2
    assert refutation.outputs == {0, 1}
    assert refutation.obliterated == [True]
    assert refutation.report.failed
    assert check_k_agreement(refutation.trace, 1).failed
    assert replay(refutation.trace).passed
    assert len(refutation.trace.steps) == len(refutation.schedule)


def test_splice_obliterates_every_stage():
    params = ProtocolParams.for_protocol(ProtocolKind.SINGLE_REGISTER, n=4, k=2, m=1, s_instances=3)
    built = build_covering(ProtocolKind.SINGLE_REGISTER, params)
    assert isinstance(built, Built)
    assert len(built.stages) == 2
    refutation = splice_and_refute(built)
    assert isinstance(refutation, Refutation)
    assert refutation.outputs == {0, 1, 2}
    assert refutation.obliterated == [True, True]


def test_splice_needs_a_later_instance():
    params = ProtocolParams.for_protocol(ProtocolKind.SINGLE_REGISTER, n=2, k=1, m=1, s_instances=1)
    built = build_covering(ProtocolKind.SINGLE_REGISTER, params)
    assert isinstance(splice_and_refute(built), NotFound)


def test_splice_rejects_empty_covering(single_register_params):
    config = initial_configuration(ProtocolKind.SINGLE_REGISTER, single_register_params, ((0, 0), (1, 1)))
    empty = Built(ProtocolKind.SINGLE_REGISTER, single_register_params, ((0, 0), (1, 1)), (), config)
    with pytest.raises(ValueError):
        splice_and_refute(empty)


def test_clone_pauses_before_write():
    params = footprint(n=3)
    trace = run(params, ProtocolKind.FOOTPRINT, ((0,), (1,), (0,)), Schedule.scripted([0, 0, 0, 0]))
    world = clone_lockstep(trace, pid=0, clone_pid=2, pause_at=2)
    assert world.schedule == [(0, Thread.T1), (2, Thread.T1), (0, Thread.T1), (2, Thread.T1),
                              (0, Thread.T1), (0, Thread.T1)]
    assert world.paused[2].written_cell == Cell("R1")
    config = resume(world)
    assert read_register(config, "R1") == 0
    assert config.machines[2].pc == trace.final.machines[0].pc


def test_clone_preconditions():
    params = footprint(n=3)
    trace = run(params, ProtocolKind.FOOTPRINT, ((0,), (1,), (0,)), Schedule.scripted([0, 0, 0, 0]))
    with pytest.raises(ValueError):
        clone_lockstep(trace, pid=0, clone_pid=1, pause_at=2)
    with pytest.raises(ValueError):
        clone_lockstep(trace, pid=0, clone_pid=2, pause_at=1)
    with pytest.raises(ValueError):
        clone_lockstep(trace, pid=0, clone_pid=2, pause_at=9)
    one_shot = ProtocolParams.for_protocol(ProtocolKind.ONE_SHOT, n=3, k=1, m=1)
    named = run(one_shot, ProtocolKind.ONE_SHOT, ((0,), (1,), (0,)), Schedule.scripted([0]))
    with pytest.raises(ValueError):
        clone_lockstep(named, pid=0, clone_pid=2, pause_at=0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=12))
def test_clones_stay_in_lockstep(script):
    params = footprint(n=3)
    trace = run(params, ProtocolKind.FOOTPRINT, ((0,), (1,), (0,)), Schedule.scripted(script))
    writes = [s.step_index for s in trace.steps if s.pid == 0 and s.written_cell is not None]
    assume(writes)
    world = clone_lockstep(trace, pid=0, clone_pid=2, pause_at=writes[-1])
    target = trace.steps[writes[-1]]
    assert world.paused[2].written_cell == target.written_cell
    assert world.paused[2].value_written == target.value_written


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.sampled_from([Thread.T1, Thread.T2])), min_size=1, max_size=30),
       st.data())
def test_anonymous_clones_stay_in_lockstep(script, data):
    params = ProtocolParams.for_protocol(ProtocolKind.ANONYMOUS, n=3, k=1, m=1, s_instances=2)
    trace = run(params, ProtocolKind.ANONYMOUS, ((0, 1), (1, 0), (0, 1)), Schedule.scripted(script))
    writes = [s.step_index for s in trace.steps if s.pid == 0 and s.written_cell is not None]
    assume(writes)
    pause_at = data.draw(st.sampled_from(writes))
    world = clone_lockstep(trace, pid=0, clone_pid=2, pause_at=pause_at)
    target = trace.steps[pause_at]
    assert world.paused[2].written_cell == target.written_cell
    assert world.paused[2].value_written == target.value_written


def test_glue_single_register_footprint():
    params = footprint(f=1)
    chain = build_glued(ProtocolKind.FOOTPRINT, params, [(0,), (1,)])
    assert isinstance(chain, BetaChain)
    assert chain.registers == (Cell("R0"),)
    assert chain.outputs == {0, 1}
    assert chain.report.failed


def test_glue_with_clones():
    params = footprint(n=4, f=2)
    chain = build_glued(ProtocolKind.FOOTPRINT, params, [(0,), (1,)])
    assert isinstance(chain, BetaChain)
    assert chain.registers == (Cell("R0"), Cell("R1"))
    assert len(chain.betas) == 3
    movers = {s.pid for s in chain.trace.steps if s.primitive is not Primitive.NOOP}
    assert movers == {0, 1, 2, 3}
    assert chain.outputs == {0, 1}


def test_glue_blocked_by_process_budget():
    params = ProtocolParams.for_protocol(ProtocolKind.ANONYMOUS, n=3, k=1, m=1)
    outcome = build_glued(ProtocolKind.ANONYMOUS, params, [(0,), (1,)])
    assert isinstance(outcome, Blocked)
    assert outcome.stage == 0
    assert "processes" in outcome.reason


def test_glue_argument_checks():
    params = footprint(f=1)
    with pytest.raises(ValueError):
        build_glued(ProtocolKind.FOOTPRINT, params, [(0,)])
    with pytest.raises(ValueError):
        build_glued(ProtocolKind.FOOTPRINT, params, [(0,), (0,)])
    one_shot = ProtocolParams.for_protocol(ProtocolKind.ONE_SHOT, n=2, k=1, m=1)
    with pytest.raises(ValueError):
        build_glued(ProtocolKind.ONE_SHOT, one_shot, [(0,), (1,)])


def test_find_glue_family():
    family = find_glue_family(ProtocolKind.FOOTPRINT, footprint(f=1))
    assert family.registers == (Cell("R0"),)
    assert family.value_sets == ((0,), (1,))
