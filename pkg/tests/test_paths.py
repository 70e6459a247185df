import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import lifted_paths
from funcito.errors import DomainError
from funcito.paths import (
    GridPath,
    LiftedPath,
    d_infinity,
    horizontal_extend,
    read_csv,
    restrict,
    step_approximate,
    vertical_bump,
    write_csv,
)


def const_path(c, T, n=4):
    return GridPath(np.linspace(0, T, n + 1), np.full(n + 1, c))


def linear(times):
    times = np.asarray(times, dtype=float)
    return GridPath(times, times)


# --- GridPath / LiftedPath construction


def test_grid_must_start_at_zero_and_increase():
    with pytest.raises(DomainError):
        GridPath([0.1, 0.2], [0, 0])
    with pytest.raises(DomainError):
        GridPath([0.0, 0.2, 0.2], [0, 0, 0])
    with pytest.raises(DomainError):
        GridPath([0.0, 1.0], [0.0, np.nan])


def test_jump_left_limit_equal_to_value_is_not_a_jump():
    p = GridPath([0, 1, 2], [0, 1, 1], [1, 2], [[0.5], [1.0]])
    assert p.jump_index.tolist() == [1]
    assert p.left_values[:, 0].tolist() == [0, 0.5, 1]


def test_non_psd_v_is_rejected():
    with pytest.raises(DomainError):
        LiftedPath.from_arrays([0, 1], [0, 0], [1.0, -0.1])
    with pytest.raises(DomainError):
        LiftedPath.from_arrays([0, 1], [[0, 0], [0, 0]], [[[1, 0.5], [0.4, 1]]] * 2)
    # negativity at round-off level relative to the largest eigenvalue is tolerated
    LiftedPath.from_arrays([0, 1], [[0, 0], [0, 0]], [[[1, 0], [0, -1e-12]]] * 2)


def test_paths_are_immutable():
    p = const_path(1.0, 1.0)
    with pytest.raises(ValueError):
        p.values[0, 0] = 3.0


def test_hold_rule_matches_oracle():
    p = GridPath([0, 0.3, 0.7, 1.0], [1, 2, 3, 4])
    for u in [0, 0.1, 0.3, 0.5, 0.7, 0.99, 1.0]:
        assert p(u)[0] == oracles.hold(list(p.times), list(p.values[:, 0]), u)


# --- restrict


def test_restrict_constant_path():
    r = restrict(const_path(1.0, 2.0), 1.0)
    assert r.horizon == 1.0 and np.all(r.values == 1.0)


def test_restrict_at_horizon_is_identity():
    p = linear([0, 0.5, 1.0])
    assert restrict(p, 1.0) is p


def test_restrict_off_grid_holds_previous_value():
    r = restrict(linear([0, 0.5, 1.0]), 0.75)
    assert r.times.tolist() == [0, 0.5, 0.75]
    assert r.values[:, 0].tolist() == [0, 0.5, 0.5]


def test_restrict_outside_domain():
    with pytest.raises(DomainError):
        restrict(linear([0, 1.0]), 1.5)
    with pytest.raises(DomainError):
        restrict(linear([0, 1.0]), -0.1)


# --- horizontal extension


def test_extend_by_zero():
    p = linear([0, 0.5, 1.0])
    assert horizontal_extend(p, 0) is p


def test_extend_constant():
    q = horizontal_extend(const_path(2.0, 1.0), 0.5)
    assert q.horizon == 1.5 and np.all(q.values == 2.0)


def test_extend_linear_quarter_grid():
    q = horizontal_extend(linear(np.linspace(0, 1, 5)), 0.5)
    np.testing.assert_allclose(q.times, [0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5])
    assert q.values[:, 0].tolist() == [0, 0.25, 0.5, 0.75, 1, 1, 1]


def test_extend_negative_h():
    with pytest.raises(DomainError):
        horizontal_extend(linear([0, 1.0]), -0.1)


# --- vertical bump


def test_zero_bump():
    p = linear([0, 1.0])
    assert vertical_bump(p, 0.0) is p


def test_bump_creates_jump_at_endpoint():
    q = vertical_bump(const_path(0.0, 1.0), np.array([1.0]))
    assert q.values[:-1, 0].tolist() == [0, 0, 0, 0] and q.values[-1, 0] == 1
    assert q.jump_index.tolist() == [4] and q.jump_left[0, 0] == 0.0


def test_bump_dimension_mismatch():
    with pytest.raises(DomainError):
        vertical_bump(const_path(0.0, 1.0), np.array([1.0, 2.0]))


@given(lifted_paths(), st.floats(-3, 3).filter(lambda e: abs(e) > 1e-6))
def test_bump_involution(p, e):
    back = vertical_bump(vertical_bump(p, np.array([e])), np.array([-e]))
    np.testing.assert_allclose(back.x.values, p.x.values, rtol=0, atol=1e-12)
    np.testing.assert_allclose(back.x.left_values, p.x.left_values, rtol=0, atol=1e-12)


@given(lifted_paths(), st.floats(-3, 3))
def test_bump_changes_only_last_sample(p, e):
    q = vertical_bump(p, np.array([e]))
    assert np.array_equal(q.x.values[:-1], p.x.values[:-1])
    assert np.array_equal(q.x.left_values[-1], p.x.left_values[-1])
    assert q.v.same_as(p.v)


@given(lifted_paths(), st.floats(0, 2))
def test_extend_changes_no_sample_and_restricts_back(p, h):
    q = horizontal_extend(p, h)
    n = p.times.size
    assert np.array_equal(q.x.values[:n], p.x.values)
    assert np.all(q.x.values[n:] == p.x.values[-1])
    assert restrict(q, p.horizon).same_as(p)


# --- d_infinity


def test_d_infinity_examples():
    times = np.linspace(0, 1, 5)
    a = LiftedPath.from_arrays(times, np.sin(times), 1 + times)
    assert d_infinity(a, a) == 0.0
    b = LiftedPath.from_arrays(times, np.sin(times) - 0.3, 1 + times)
    assert d_infinity(a, b) == pytest.approx(0.3)
    assert d_infinity(a, horizontal_extend(a, 0.25)) == pytest.approx(0.25)


def test_d_infinity_vector_offset_uses_max_norm():
    times = np.linspace(0, 1, 3)
    x = np.zeros((3, 2))
    a = LiftedPath.from_arrays(times, x)
    b = LiftedPath.from_arrays(times, x + np.array([0.1, -0.4]))
    assert d_infinity(a, b) == pytest.approx(0.4)


def test_d_infinity_dimension_mismatch():
    a = LiftedPath.from_arrays([0, 1], [0, 0])
    b = LiftedPath.from_arrays([0, 1], np.zeros((2, 2)))
    with pytest.raises(DomainError):
        d_infinity(a, b)


@given(lifted_paths(jumps=False), lifted_paths(jumps=False))
def test_d_infinity_matches_oracle(a, b):
    ref = oracles.d_infinity(
        list(a.times), list(a.x.values[:, 0]), list(a.v.values[:, 0, 0]),
        list(b.times), list(b.x.values[:, 0]), list(b.v.values[:, 0, 0]),
    )
    assert d_infinity(a, b) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@given(lifted_paths(), lifted_paths(), lifted_paths())
def test_d_infinity_metric_axioms(a, b, c):
    dab, dba = d_infinity(a, b), d_infinity(b, a)
    assert dab >= 0 and dab == pytest.approx(dba, abs=1e-12)
    assert d_infinity(a, a) == 0
    assert d_infinity(a, c) <= dab + d_infinity(b, c) + 1e-9


@given(lifted_paths())
def test_d_infinity_zero_only_for_same_path(p):
    q = vertical_bump(p, np.array([0.5]))
    assert d_infinity(p, q) == pytest.approx(0.5)


# --- step approximation


def test_step_linear_path_bound():
    p = linear(np.linspace(0, 1, 257))
    assert step_approximate(p, 4).sup_error <= 2.0**-4 + 1e-15


def test_step_constant_path():
    for n in range(1, 6):
        assert step_approximate(const_path(3.0, 1.0, 16), n).sup_error == 0.0


def test_step_single_jump_included():
    t = np.union1d(np.linspace(0, 1, 9), [1 / 3])
    x = (t >= 1 / 3).astype(float)
    k = int(np.searchsorted(t, 1 / 3))
    p = GridPath(t, x, [k], [0.0])
    a = step_approximate(p, 2)
    assert np.any(np.isclose(a.partition, 1 / 3))
    assert a.sup_error == 0.0


def test_step_small_jump_excluded():
    t = np.union1d(np.linspace(0, 1, 9), [1 / 3])
    x = 0.3 * (t >= 1 / 3)
    k = int(np.searchsorted(t, 1 / 3))
    p = GridPath(t, x, [k], [0.0])
    a = step_approximate(p, 2)
    assert not np.any(np.isclose(a.partition, 1 / 3))
    assert a.sup_error == pytest.approx(0.3)


def test_step_level_requires_positive_integer():
    with pytest.raises(DomainError):
        step_approximate(const_path(0, 1), 0)


@given(lifted_paths(max_points=8), st.integers(1, 5))
def test_step_error_matches_oracle(p, n):
    x = p.x
    ref = oracles.step_sup_error(
        list(x.times), list(x.values[:, 0]), list(x.times[x.jump_index]), list(x.jump_left[:, 0]), n
    )
    assert step_approximate(p, n).sup_error == pytest.approx(ref, abs=1e-12)


@given(lifted_paths(max_points=8), st.integers(1, 5))
def test_step_reproduces_path_at_partition_points(p, n):
    a = step_approximate(p, n)
    np.testing.assert_array_equal(a(a.partition), p.x(a.partition))


# --- CSV


@given(lifted_paths())
def test_csv_round_trip_is_bit_exact(tmp_path_factory, p):
    f = tmp_path_factory.mktemp("csv") / "p.csv"
    write_csv(p, f)
    assert read_csv(f).same_as(p)


def test_csv_header(tmp_path):
    p = LiftedPath.from_arrays([0, 0.5, 1], np.zeros((3, 2)))
    write_csv(p, tmp_path / "p.csv")
    head = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert head == "t,x_1,x_2,v_11,v_12,v_21,v_22,jump_flag"
