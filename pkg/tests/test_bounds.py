"""Tests for the register bound calculator."""

import math

import pytest

from setspace.bounds import anonymous_lower, bounds, format_lower, glue_registers, gluing_requirement, group_count, sweep


def test_consensus_needs_n_registers():
    b = bounds(5, 1, 1)
    assert b.repeated_lower == 5
    assert b.repeated_upper == 5


def test_repeated_bounds():
    b = bounds(6, 2, 3)
    assert b.repeated_lower == 5
    assert b.repeated_upper == 6
    assert b.one_shot_lower == 2
    assert b.one_shot_upper == 6
    assert b.c == 2


def test_anonymous_repeated_upper():
    assert bounds(4, 1, 2).anonymous_repeated_upper == 6
    assert bounds(4, 1, 2).anonymous_one_shot_upper == 5


def test_anonymous_lower():
    assert anonymous_lower(12, 2, 2) == pytest.approx(math.sqrt(8))
    assert anonymous_lower(4, 1, 2) == 0.0
    b = bounds(12, 2, 2)
    assert b.anonymous_min_registers == 3
    assert format_lower(b.anonymous_one_shot_lower) == "2.828"


def test_group_count():
    assert group_count(2, 3) == 2
    assert group_count(1, 1) == 2
    assert group_count(2, 4) == 3


def test_gluing_requirement():
    assert gluing_requirement(1, 1, 1) == 2
    assert gluing_requirement(2, 1, 1) == 4
    assert gluing_requirement(3, 2, 3) == 2 * (2 + 3)
    assert gluing_requirement(0, 2, 3) == 4


def test_glue_registers_reported():
    b = bounds(12, 2, 2)
    assert glue_registers(12, 2, 2) == 3
    assert b.glue_registers == 3
    assert b.glue_processes == 10
    assert b.to_dict()["glue_processes"] == 10
    assert bounds(3, 2, 2).glue_registers == 0


def test_invalid_parameters():
    with pytest.raises(ValueError):
        bounds(3, 2, 1)
    with pytest.raises(ValueError):
        bounds(3, 1, 3)


def test_sweep_covers_every_triple():
    rows = sweep(range(3, 5))
    assert len(rows) == 3 + 6
    assert all(1 <= b.m <= b.k < b.n for b in rows)
    assert rows[0].to_dict()["anonymous_min_registers"] >= 1
