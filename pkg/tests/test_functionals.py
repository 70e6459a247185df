import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import lifted_paths
from funcito.errors import ContractError, DomainError
from funcito.functionals import (
    CATALOG_IDS,
    C00_L,
    IRREGULAR,
    DerivativeJet,
    PrefixView,
    cylindrical_functional,
    doleans_functional,
    qv_integral_functional,
    quadratic_martingale_functional,
    resolve,
)
from funcito.paths import LiftedPath, horizontal_extend, restrict, vertical_bump


def path(times, x, v=None, **kw):
    return LiftedPath.from_arrays(np.asarray(times, float), np.asarray(x, float), v, **kw)


def jet_tuple(F, p):
    j = F.jet(p)
    return j.horizontal, j.gradient.tolist(), j.hessian.ravel().tolist()


# --- smooth


def test_smooth_x2():
    F = resolve("smooth:x2")
    p = path([0, 0.5, 1], [0, 1, 3])
    assert F.evaluate(p) == 9
    assert jet_tuple(F, p) == (0, [6], [2])


def test_smooth_t():
    assert jet_tuple(resolve("smooth:t"), path([0, 1], [0, 5])) == (1, [0], [0])


def test_smooth_tx():
    F = resolve("smooth:tx")
    p = path([0, 0.5], [0, 2])
    assert F.evaluate(p) == 1
    assert jet_tuple(F, p) == (2, [0.5], [0])


# --- cylindrical


def test_cylindrical_before_tn_is_zero():
    F = resolve("cylindrical:0.5")
    p = path([0, 0.25], [0, 1])
    assert F.evaluate(p) == 0
    assert jet_tuple(F, p) == (0, [0], [0])


def test_cylindrical_identity_kernel():
    F = resolve("cylindrical:0.5")
    p = path([0, 0.5, 1], [0, 0.2, 0.7])
    assert F.evaluate(p) == pytest.approx(0.5)
    assert jet_tuple(F, p) == (0, [1], [0])


def test_cylindrical_square_kernel():
    F = resolve("cylindrical:0.5:x2")
    p = path([0, 0.5, 1], [0, 1.0, 1.3])
    assert F.evaluate(p) == pytest.approx(0.09)
    h, g, H = jet_tuple(F, p)
    assert g[0] == pytest.approx(0.6) and H == [2]


def test_cylindrical_reads_left_limit_at_tn():
    F = resolve("cylindrical:0.5")
    p = path([0, 0.5, 1], [0, 1.0, 1.0], jump_index=[1], jump_left=[0.4])
    assert F.evaluate(p) == pytest.approx(0.6)
    # a bump at t_n itself must not leak into x(t_n-)
    q = vertical_bump(restrict(path([0, 0.5, 1], [0, 0.3, 1]), 0.5), np.array([0.2]))
    assert F.evaluate(q) == pytest.approx(0.2)


def test_cylindrical_validation():
    one = lambda lefts: np.ones(lefts.shape[:-2])  # noqa: E731
    with pytest.raises(DomainError):
        cylindrical_functional([0.5, 0.2], one, lambda y: y[..., 0])
    with pytest.raises(DomainError):
        cylindrical_functional([0.5], one, lambda y: y[..., 0] + 1.0)
    with pytest.raises(DomainError):
        cylindrical_functional([0.5], one, lambda y: y[..., 0], horizon=0.5)


# --- qv integral


def test_qv_integral_constant():
    F = resolve("qv_integral:1")
    p = path(np.linspace(0, 0.7, 8), np.zeros(8), np.ones(8))
    assert F.evaluate(p) == pytest.approx(0.7)
    assert jet_tuple(F, p) == (1, [0], [0])


def test_qv_integral_g_x():
    F = resolve("qv_integral:x")
    p = path(np.linspace(0, 1, 11), np.full(11, 2.0), np.full(11, 3.0))
    assert F.evaluate(p) == pytest.approx(6.0)
    assert F.jet(p).horizontal == pytest.approx(6.0)


def test_qv_integral_uses_trace_in_higher_dimension():
    F = qv_integral_functional(lambda x: np.ones(x.shape[:-1]))
    v = np.broadcast_to(np.diag([1.0, 2.0]), (5, 2, 2))
    p = path(np.linspace(0, 1, 5), np.zeros((5, 2)), v)
    assert F.evaluate(p) == pytest.approx(3.0)


# --- quadratic martingale / Doleans


def test_quadratic_martingale_examples():
    F = quadratic_martingale_functional()
    p = path([0, 1], [0, 3], [1.0, 1.0])
    assert F.evaluate(p) == pytest.approx(8)
    assert jet_tuple(F, p) == (-1, [6], [2])
    z = path([0, 1], [0, 0], [0.0, 0.0])
    assert F.evaluate(z) == 0 and jet_tuple(F, z) == (0, [0], [2])
    h = path([0, 0.5], [0, 1], [1.0, 1.0])
    assert F.evaluate(h) == pytest.approx(0.5)
    assert jet_tuple(F, h) == (-1, [2], [2])


def test_quadratic_martingale_requires_d1():
    F = quadratic_martingale_functional()
    with pytest.raises(DomainError):
        F.evaluate(path([0, 1], np.zeros((2, 2))))


def test_doleans_examples():
    F = doleans_functional()
    z = path([0, 1], [0, 0], [0.0, 0.0])
    assert F.evaluate(z) == 1 and jet_tuple(F, z) == (0, [1], [1])
    p = path([0, 1], [0, 1], [2.0, 5.0])
    assert F.evaluate(p) == pytest.approx(1.0)
    assert F.jet(p).horizontal == pytest.approx(-2.5)


@given(lifted_paths())
def test_doleans_gradient_equals_value(p):
    F = doleans_functional()
    j = F.jet(p)
    assert j.gradient[0] == F.evaluate(p) == j.hessian[0, 0]


# --- obstructions


def test_running_max_on_increasing_path():
    F = resolve("running_max")
    p = path(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    assert F.evaluate(p) == 1.0
    right, left, flag = F.one_sided(PrefixView.of_path(p))
    assert (right[0], left[0], bool(flag[0])) == (1.0, 0.0, True)
    assert F.declared_class == C00_L


def test_running_max_below_interior_max():
    F = resolve("running_max")
    p = path([0, 0.5, 1], [0, 5, 1])
    assert F.evaluate(p) == 5
    right, left, flag = F.one_sided(PrefixView.of_path(p))
    assert right[0] == left[0] == 0 and not flag[0]


def test_delayed_value():
    F = resolve("delayed:0.25")
    p = path(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    assert F.evaluate(p) == 0.75
    assert F.evaluate(vertical_bump(p, np.array([1.0]))) == 0.75
    assert F.declared_class == IRREGULAR and not F.has_jet


def test_jumps_functionals():
    p = path([0, 0.5, 1], [0, 1, 1.5], jump_index=[1, 2], jump_left=[0.2, 1.1])
    assert resolve("current_jump").evaluate(p) == pytest.approx(0.4)
    assert resolve("fixed_time_jump:0.5").evaluate(p) == pytest.approx(0.8)
    assert resolve("fixed_time_jump:0.5").evaluate(restrict(p, 0.25)) == 0


def test_missing_jet_is_a_contract_error():
    with pytest.raises(ContractError):
        resolve("running_max").jet(path([0, 1], [0, 1]))


def test_jet_hessian_must_be_symmetric():
    with pytest.raises(DomainError):
        DerivativeJet(0.0, np.zeros(2), np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_unknown_ids():
    for bad in ["nope", "smooth:cube", "qv_integral:y", "cylindrical:0.5:cube"]:
        with pytest.raises(DomainError):
            resolve(bad)


# --- against loop oracles on every prefix


@given(lifted_paths())
def test_prefix_values_match_oracles(p):
    t, x, xl, v = p.times, p.x.values[:, 0], p.x.left_values[:, 0], p.v.values[:, 0, 0]
    qm = resolve("quadratic_martingale").along(p)
    dol = resolve("doleans").along(p)
    rmax = resolve("running_max").along(p)
    dly = resolve("delayed:0.25").along(p)
    qvx = resolve("qv_integral:x").along(p)
    for i in range(t.size):
        assert qm[i] == pytest.approx(oracles.quadratic_martingale(t, x, v, i), rel=1e-12, abs=1e-12)
        assert dol[i] == pytest.approx(oracles.doleans(t, x, v, i), rel=1e-12)
        assert rmax[i] == oracles.running_max(x, xl, i)
        assert dly[i] == oracles.delayed(t, x, i, 0.25)
        assert qvx[i] == pytest.approx(oracles.left_rectangle(t, x * v, i), rel=1e-12, abs=1e-12)


# --- evaluation-contract properties for every catalog functional

IDS = list(CATALOG_IDS)


@pytest.mark.parametrize("fid", IDS)
@given(p=lifted_paths(min_points=3), data=st.data())
def test_non_anticipative(fid, p, data):
    F = resolve(fid)
    n = p.times.size
    i = data.draw(st.integers(0, n - 2))
    before = F.values(PrefixView.of_path(p, [i]))[0]
    x = np.array(p.x.values)
    v = np.array(p.v.values)
    x[i + 1 :] = data.draw(st.floats(-9, 9))
    v[i + 1 :] = data.draw(st.floats(0, 9))
    xl = np.array(p.x.left_values)
    xl[i + 1 :] = x[i + 1 :]
    after = F.values(PrefixView.along(p.times, x, v, x_left=xl, index=[i]))[0]
    assert after == before
    assert F.evaluate(restrict(p, p.times[i])) == pytest.approx(before, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("fid", IDS)
@given(p=lifted_paths(), w=st.floats(0, 9))
def test_predictable_in_v(fid, p, w):
    F = resolve(fid)
    assert F.predictable_in_v
    v = np.array(p.v.values)
    v[-1] = w
    q = LiftedPath(p.x, LiftedPath.from_arrays(p.times, p.x.values, v).v)
    assert F.evaluate(q) == F.evaluate(p)


@pytest.mark.parametrize("fid", IDS)
@given(p=lifted_paths(min_points=3), e=st.floats(-2, 2), data=st.data())
def test_bumped_view_matches_explicit_bump(fid, p, e, data):
    F = resolve(fid)
    i = data.draw(st.integers(0, p.times.size - 1))
    view = PrefixView.of_path(p, [i]).bumped(np.array([[e]]))
    explicit = F.evaluate(vertical_bump(restrict(p, p.times[i]), np.array([e])))
    assert F.values(view)[0] == pytest.approx(explicit, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("fid", IDS)
@given(p=lifted_paths(min_points=3), h=st.floats(0.01, 1.0), data=st.data())
def test_extended_view_matches_explicit_extension(fid, p, h, data):
    F = resolve(fid)
    i = data.draw(st.integers(0, p.times.size - 1))
    view = PrefixView.of_path(p, [i]).extended(h)
    explicit = F.evaluate(horizontal_extend(restrict(p, p.times[i]), h))
    assert F.values(view)[0] == pytest.approx(explicit, rel=1e-12, abs=1e-12)


def _left_limit_at(p, s):
    k = int(np.searchsorted(p.times, s + 1e-12, side="right") - 1)
    return p.x.left_values[k, 0] if abs(p.times[k] - s) <= 1e-12 else p.x.values[k, 0]


@pytest.mark.parametrize("fid", ["smooth:x2", "smooth:sin", "cylindrical:0.5", "cylindrical:0.5:x2"])
@given(p=lifted_paths(min_points=3, horizon=1.0), e=st.floats(-1, 1))
def test_vertical_locality(fid, p, e):
    """A bump moves the value exactly as the one-dimensional map e -> F(x^e)."""
    F = resolve(fid)
    t, x = p.horizon, p.x.values[-1, 0]
    if fid == "smooth:x2":
        expect = (x + e) ** 2
    elif fid == "smooth:sin":
        expect = math.exp(-t) * math.sin(x + e)
    else:
        incr = x + e - _left_limit_at(p, 0.5)
        expect = incr**2 if fid.endswith(":x2") else incr
    assert F.evaluate(vertical_bump(p, np.array([e]))) == pytest.approx(expect, rel=1e-10, abs=1e-10)
