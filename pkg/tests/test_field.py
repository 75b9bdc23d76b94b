import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crushflow import cantor, moving_blob
from crushflow.field import (
    ConstantField, ConstructionField, Params, ReversedField, StageField, SteadyField, ZeroField,
    active_stage, make_field, stage_displacement, stage_floor, stage_indices, stage_window, tau,
)

# independent oracles (mpmath, 30 digits), frozen
TAU1_B34 = 0.840896415253714543
TAU_INF_B34 = 5.28521350788324520
TAU_INF_DEFAULT = 2.09720043356616201660726254197


# ----------------------------------------------------------------------------
# parameters and stage times


def test_defaults(params):
    assert params.beta == pytest.approx(0.4375)
    assert params.tau_inf == pytest.approx(TAU_INF_DEFAULT, rel=1e-14)
    assert params.p_threshold == pytest.approx(8 / 7, rel=1e-14)
    assert params.alpha_bound == pytest.approx(0.25)
    assert params.alpha == pytest.approx(0.125)
    assert params.theta == pytest.approx(cantor.theta_margin(0.75))


@pytest.mark.parametrize("kw", [
    dict(d=1), dict(nu=0.0), dict(nu=1.0), dict(beta=1.0), dict(beta=0.0),
    dict(T=0.0), dict(depth=0), dict(theta_scale=20.0),
])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        Params(**kw)


def test_stage_times_beta_three_quarters():
    p = Params(beta=0.75)
    assert tau(p, 0) == 0.0
    assert tau(p, 1) == pytest.approx(TAU1_B34, rel=1e-14)
    assert tau(p, math.inf) == pytest.approx(TAU_INF_B34, rel=1e-14)


@pytest.mark.parametrize("beta", [0.2, 0.4375, 0.75])
def test_stage_times_are_partial_sums(beta):
    p = Params(beta=beta)
    r = 1 - beta
    partial = np.concatenate([[0.0], np.cumsum(2.0 ** (-r * np.arange(1, 40)))])
    assert np.allclose([tau(p, i) for i in range(40)], partial, rtol=1e-13)


def test_window_is_middle_third(params):
    for i in range(6):
        a, b = tau(params, i), tau(params, i + 1)
        s, e = stage_window(params, i)
        assert s - a == pytest.approx((b - a) / 3) and b - e == pytest.approx((b - a) / 3)


@given(st.floats(0.0, 2.0971))
def test_stage_floor_brackets(t):
    p = Params()
    i = int(stage_floor(p, t))
    assert tau(p, i) <= t < tau(p, i + 1)


@pytest.mark.parametrize("i", [1, 2, 5, 20])
def test_boundaries_have_no_stage(params, i):
    assert active_stage(params, tau(params, i)) is None
    assert int(stage_indices(params, tau(params, i))) == -1


def test_active_stage(params):
    assert active_stage(params, 0.5 * tau(params, 1)) == 0
    assert active_stage(params, params.tau_inf) is None
    with pytest.raises(ValueError):
        active_stage(params, -1.0)
    with pytest.raises(ValueError):
        active_stage(params, params.tau_inf + 1)


def test_stage_zero_displacement_vanishes(params):
    assert stage_displacement(params, 0) == 0.0
    assert stage_displacement(params, 2) > 0


# ----------------------------------------------------------------------------
# simple fields


def test_zero_and_constant(rng):
    x = rng.uniform(size=(10, 3))
    assert np.all(ZeroField(3).value(0.0, x) == 0)
    c = ConstantField([1.0, 2.0, 3.0])
    assert np.allclose(c.value(0.3, x), [1, 2, 3])
    assert np.all(c.jacobian(0.3, x) == 0)
    assert c(0.3, x[0]).shape == (3,)


# ----------------------------------------------------------------------------
# stage fields


def brute_stage(st_field, t, x):
    total = np.zeros_like(x)
    for spec in st_field.blobs:
        total += moving_blob.vtilde(spec, t, x)
    return total


@pytest.mark.parametrize("i", [0, 1, 2])
def test_stage_field_equals_sum_of_blobs(params, i, rng):
    sf = StageField(params, i)
    x = rng.uniform(size=(1500, 2))
    for t in np.linspace(sf.t_s, sf.t_e, 5)[1:-1]:
        assert np.allclose(sf.value(t, x), brute_stage(sf, t, x), atol=1e-12)


@pytest.mark.parametrize("i", [1, 2])
def test_stage_field_d3_equals_sum_of_blobs(i, rng):
    p = Params(d=3)
    sf = StageField(p, i)
    x = rng.uniform(size=(1000, 3))
    t = 0.5 * (sf.t_s + sf.t_e)
    assert np.allclose(sf.value(t, x), brute_stage(sf, t, x), atol=1e-12)


def test_stage_zero_is_identically_zero(params, rng):
    sf = StageField(params, 0)
    x = rng.uniform(size=(500, 2))
    assert np.all(sf.value(0.5 * (sf.t_s + sf.t_e), x) == 0)


@pytest.mark.parametrize("i", [1, 2, 3])
def test_stage_blob_supports_disjoint(params, i):
    sf = StageField(params, i)
    reach = sf.lam * (0.5 + 7 * sf.delta / 16)
    for s in np.linspace(0, 1, 6):
        cs = np.array([np.asarray(b.x_s) + b.displacement * s for b in sf.blobs])
        assert cantor.pairwise_min_separation(cs) > 2 * reach


def test_stage_rejects_out_of_range(params):
    with pytest.raises(ValueError):
        StageField(params, params.depth)
    with pytest.raises(ValueError):
        StageField(params, 1).blob_for(cantor.Address.parse("++"))


@pytest.mark.parametrize("i", [1, 2, 3])
def test_stage_divergence_free(params, i, rng):
    sf = StageField(params, i)
    t = 0.5 * (sf.t_s + sf.t_e)
    jac = sf.jacobian(t, rng.uniform(size=(4000, 2)))
    assert np.abs(np.trace(jac, axis1=1, axis2=2)).max() < 1e-8 * max(1.0, np.abs(jac).max())


# ----------------------------------------------------------------------------
# construction and reversed fields


def test_construction_matches_stages(params, rng):
    v = ConstructionField(params)
    x = rng.uniform(size=(400, 2))
    for i in range(4):
        s, e = stage_window(params, i)
        for t in (s + 0.3 * (e - s), 0.5 * (s + e)):
            assert np.allclose(v.value(t, x), v.stage(i).value(t, x))
        gap = tau(params, i) + 0.1 * (s - tau(params, i))
        assert np.all(v.value(gap, x) == 0)


def test_construction_truncated_and_time_checked(rng):
    p = Params(depth=3)
    v = ConstructionField(p)
    x = rng.uniform(size=(50, 2))
    s, e = stage_window(p, 4)
    assert np.all(v.value(0.5 * (s + e), x) == 0)
    with pytest.raises(ValueError):
        v.value(p.tau_inf + 0.1, x)


def test_construction_batched_times(params, rng):
    v = ConstructionField(params)
    x = rng.uniform(size=(200, 2))
    t = rng.uniform(0, params.tau_inf, 200)
    got = v._evaluate(t, x, ("value",))["value"]
    one = np.array([v.value(ti, xi) for ti, xi in zip(t, x)])
    assert np.allclose(got, one)


@pytest.mark.parametrize("T", [1.0, 0.5, 3.0])
def test_reversed_definition(T, rng):
    p = Params(T=T)
    u, v = ReversedField(p), ConstructionField(p)
    x = rng.uniform(size=(300, 2))
    for t in rng.uniform(0, T, 5):
        s = p.tau_inf * (1 - t / T)
        assert np.allclose(u.value(t, x), -(p.tau_inf / T) * v.value(s, x))
    with pytest.raises(ValueError):
        u.value(T * 1.5, x)


def test_reversed_time_derivative_fd(rng):
    p = Params(T=2.0)
    u = ReversedField(p)
    st = u.v.stage(2)
    t = p.T * (1 - 0.5 * (st.t_s + st.t_e) / p.tau_inf)
    c = np.array(st.blobs[0].x_s) + st.blobs[0].displacement * 0.5
    x = c + rng.uniform(-0.5, 0.5, size=(50, 2)) * st.lam
    h = 1e-7
    fd = (u.value(t + h, x) - u.value(t - h, x)) / (2 * h)
    dt = u.time_derivative(t, x)
    assert np.allclose(dt, fd, atol=1e-4 * np.abs(dt).max())


# ----------------------------------------------------------------------------
# steady lift


def test_steady_needs_three_dimensions():
    with pytest.raises(ValueError):
        SteadyField(Params(d=2))
    with pytest.raises(ValueError):
        SteadyField(Params(d=3), eps=1.5)


def test_steady_outside_slab(rng):
    us = SteadyField(Params(d=3), eps=0.5)
    x = rng.uniform(size=(200, 3))
    x[:, 2] *= 0.49
    assert np.allclose(us.value(0.0, x), [0, 0, 1])


def test_steady_inside_slab(rng):
    us = SteadyField(Params(d=3), eps=0.5)
    x = rng.uniform(size=(500, 3))
    x[:, 2] = 0.5 + 0.5 * x[:, 2]
    s = (x[:, 2] - 0.5) / 0.5
    inner = us.inner._evaluate(s, x[:, :2], ("value",))["value"]
    val = us.value(7.0, x)
    assert np.allclose(val[:, :2], inner / 0.5) and np.allclose(val[:, 2], 1)


def test_steady_jacobian_fd_and_divergence(rng):
    us = SteadyField(Params(d=3), eps=0.5)
    inner = us.inner
    st = inner.v.stage(2)
    t_v = st.t_s + 0.3 * (st.t_e - st.t_s)
    s = 1 - t_v / inner.params.tau_inf
    b = st.blobs[3]
    c = np.array(b.x_s) + b.displacement * float(moving_blob.eta(0.3))
    xy = c + rng.uniform(-0.56, 0.56, size=(40, 2)) * st.lam
    x = np.column_stack([xy, np.full(40, 0.5 + 0.5 * s)])
    jac = us.jacobian(0.0, x)
    h = 1e-8
    fd = np.stack([(us.value(0, x + e) - us.value(0, x - e)) / (2 * h) for e in np.eye(3) * h], axis=-1)
    assert np.allclose(jac, fd, atol=1e-4 * np.abs(jac).max())
    assert np.abs(np.trace(jac, axis1=1, axis2=2)).max() < 1e-8 * np.abs(jac).max()


# ----------------------------------------------------------------------------
# factory


@pytest.mark.parametrize("name", ["w", "vtilde", "vi", "v", "u", "usteady"])
def test_make_field(name):
    p = Params(d=3)
    f = make_field(name, p)
    assert f.d == 3
    x = np.full((4, 3), 0.4)
    assert f.value(0.5, x).shape == (4, 3)
    assert np.all(np.asarray(f.max_step(np.array([0.1, 0.2]))) > 0)


def test_make_field_rejects():
    with pytest.raises(ValueError):
        make_field("nope", Params())
