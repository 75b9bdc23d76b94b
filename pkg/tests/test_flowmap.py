import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crushflow import cantor, flowmap
from crushflow.cantor import THETA, Address, phi
from crushflow.field import ConstantField, ConstructionField, Params, ReversedField, VectorField, tau
from crushflow.flowmap import IntegrationError, Trajectory


class ShearField(VectorField):
    """u = (a sin(2 pi x2) + b cos t, c): closed-form solution, depends on both t and x."""

    name = "shear"

    def __init__(self, a=0.3, b=0.2, c=0.7):
        self.a, self.b, self.c = a, b, c
        self.d = 2

    def _evaluate(self, t, x, want):
        t = np.broadcast_to(np.asarray(t, float), (len(x),))
        v = np.column_stack([self.a * np.sin(2 * np.pi * x[:, 1]) + self.b * np.cos(t),
                             np.full(len(x), self.c)])
        return {"value": v}

    def exact(self, x0, t0, t):
        x2 = x0[1] + self.c * (t - t0)
        k = 2 * np.pi
        x1 = (x0[0] - self.a / (k * self.c) * (np.cos(k * x2) - np.cos(k * x0[1]))
              + self.b * (np.sin(t) - np.sin(t0)))
        return np.array([x1, x2]) % 1.0


class TinyStepField(ConstantField):
    def max_step(self, t):
        return np.full(np.shape(t), 1e-16)


def torus_close(a, b, atol):
    return np.all(np.abs(cantor.torus_delta(a, b)) <= atol)


# ----------------------------------------------------------------------------
# integrator


@pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12])
@pytest.mark.parametrize("t0,t1", [(0.0, 2.0), (1.5, -0.5)])
def test_integrator_against_exact(tol, t0, t1, rng):
    f = ShearField()
    x0 = rng.uniform(size=(20, 2))
    y = flowmap.integrate_batch(f, x0, t0, t1, tol)
    exact = np.array([f.exact(x, t0, t1) for x in x0])
    assert torus_close(y, exact, 200 * tol)


def test_integrate_trajectory_samples():
    f = ShearField()
    tr = flowmap.integrate(f, np.array([0.1, 0.2]), 0.0, 1.0, 1e-10)
    assert tr.times[0] == 0.0 and tr.times[-1] == 1.0
    assert np.all(np.diff(tr.times) > 0)
    for t, x in zip(tr.times, tr.points):
        assert torus_close(x, f.exact(np.array([0.1, 0.2]), 0.0, t), 1e-8)
    assert tr.field_name == "shear" and tr.tol == 1e-10


def test_integrate_validation():
    f = ShearField()
    with pytest.raises(ValueError):
        flowmap.integrate(f, np.zeros(2), 1.0, 0.0)
    with pytest.raises(ValueError):
        flowmap.integrate(f, np.zeros(3), 0.0, 1.0)


def test_zero_span_returns_start():
    y = flowmap.integrate_batch(ShearField(), np.array([[0.2, 0.3]]), 0.5, 0.5)
    assert np.allclose(y, [[0.2, 0.3]])


def test_step_underflow_raises():
    with pytest.raises(IntegrationError) as info:
        flowmap.integrate_batch(TinyStepField([1.0, 0.0]), np.zeros((1, 2)), 0.0, 1.0)
    assert info.value.t == 0.0 and info.value.y.shape == (2,)


def test_batch_equals_single(rng):
    f = ShearField()
    x0 = rng.uniform(size=(5, 2))
    y = flowmap.integrate_batch(f, x0, 0.0, 1.3, 1e-10)
    for k in range(5):
        assert np.allclose(y[k], flowmap.integrate_batch(f, x0[k:k + 1], 0.0, 1.3, 1e-10)[0])


# ----------------------------------------------------------------------------
# trajectories and residuals


def test_ode_residual_is_second_order():
    f = ShearField()
    x0 = np.array([0.3, 0.1])
    res = []
    for n in (50, 100, 200):
        t = np.linspace(0, 1, n + 1) ** 1.3  # non-uniform spacing on purpose
        pts = np.array([f.exact(x0, 0.0, s) for s in t])
        res.append(flowmap.ode_residual(f, Trajectory(t, pts, np.zeros(n + 1), "exact")))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.1)
    assert res[1] / res[2] == pytest.approx(4.0, rel=0.1)


def test_ode_residual_needs_three_samples():
    with pytest.raises(ValueError):
        flowmap.ode_residual(ShearField(), Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2)), np.zeros(2), "x"))


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2)), np.zeros(2), "x")
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((3, 2)), np.zeros(2), "x")


def test_trajectory_csv():
    tr = Trajectory(np.array([0.0, 0.5]), np.array([[0.1, -0.0], [1 / 3, 0.25]]), np.zeros(2), "x")
    text = tr.to_csv()
    lines = text.split("\n")
    assert lines[0] == "t,x1,x2,err_est"
    assert lines[1] == "0,0.10000000000000001,0,0"
    assert lines[2].split(",")[1] == "0.33333333333333331"
    buf = io.StringIO()
    assert tr.to_csv(buf) is None and buf.getvalue() == text


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_roundtrips(v):
    assert float(flowmap.format_float(v)) == v
    assert not flowmap.format_float(v).startswith("-0") or v < 0


# ----------------------------------------------------------------------------
# closed-form Cantor trajectories


ADDRESSES = ["++,--", "-+,+-,++", "--,--,--,--"]


@pytest.mark.parametrize("text", ADDRESSES)
def test_analytic_trajectory_endpoints(params, text):
    a = Address.parse(text)
    x0 = cantor.limit_point(phi(params.nu), a)
    assert np.allclose(flowmap.analytic_cantor_trajectory(params, a, 0.0), x0)
    end = flowmap.analytic_cantor_trajectory(params, a, tau(params, a.n))
    assert torus_close(end, cantor.limit_point(THETA, a), 1e-14)


@pytest.mark.parametrize("text", ADDRESSES)
def test_analytic_trajectory_stage_boundaries(params, text):
    a = Address.parse(text)
    for i in range(a.n):
        x_i = flowmap.analytic_cantor_trajectory(params, a, tau(params, i))
        assert cantor.in_closed_cube(x_i, cantor.shifted_center(params.nu, a.truncate(i + 1)),
                                     cantor.length(phi(params.nu), i + 1))


def test_analytic_trajectory_rejects_late_times(params):
    a = Address.parse("++,++")
    with pytest.raises(ValueError):
        flowmap.analytic_cantor_trajectory(params, a, tau(params, 3))


@pytest.mark.parametrize("text", ADDRESSES[:2])
def test_numeric_matches_analytic(params, text):
    a = Address.parse(text)
    x0 = cantor.limit_point(phi(params.nu), a)
    tr = flowmap.integrate(ConstructionField(params), x0, 0.0, tau(params, a.n), 1e-11)
    exact = flowmap.analytic_cantor_trajectory(params, a, tr.times)
    assert torus_close(tr.points, exact, 1e-8)


def test_analytic_stage_step(params):
    a = Address.parse("+-,-+")
    start = cantor.shifted_center(params.nu, a)
    y = flowmap.analytic_stage_step(params, 1, a, start)
    assert np.allclose(y, cantor.center(THETA, a))
    with pytest.raises(ValueError):
        flowmap.analytic_stage_step(params, 1, a, start + 0.3)
    with pytest.raises(ValueError):
        flowmap.analytic_stage_step(params, 2, a, start)


def test_analytic_reversed_trajectory(params):
    a = Address.parse("+-,-+,++")
    u = flowmap.analytic_reversed_trajectory(params, a, np.array([0.0, params.T]))
    assert torus_close(u[0], cantor.limit_point(THETA, a), 1e-14)
    assert torus_close(u[1], cantor.limit_point(phi(params.nu), a), 1e-14)


# ----------------------------------------------------------------------------
# crushing maps


def test_crush_identity_at_generation_zero(params, rng):
    x = rng.uniform(size=(100, 2))
    assert np.array_equal(flowmap.crush_map(params, x, 0), x)
    assert np.array_equal(flowmap.translate_crush(params, x, 0), x)


def test_crush_rejects_generation(params):
    with pytest.raises(ValueError):
        flowmap.crush_map(params, np.zeros((1, 2)), params.depth + 1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_core_points_translate_exactly(params, n, rng):
    x = rng.uniform(size=(3000, 2))
    core = flowmap.core_mask(params, x, n)
    assert core.any()
    y = flowmap.crush_map(params, x[core], n)
    assert torus_close(y, flowmap.translate_crush(params, x[core], n), 1e-12)
    assert cantor.in_generation_set(y, params.nu, n).all()


def test_core_fraction_matches_volume(params):
    from crushflow.analysis import jittered_grid
    x = jittered_grid(256, 2, seed=1)
    for n in (1, 2, 3):
        assert flowmap.core_mask(params, x, n).mean() == pytest.approx(
            cantor.cantor_volume(params.nu, 2, n), rel=0.05)


def test_crush_is_composition_of_stages(params, rng):
    x = rng.uniform(size=(400, 2))
    step = x.copy()
    for i in (2, 1, 0):
        step = flowmap.pull_back_stage(params, i, step)
    assert torus_close(flowmap.crush_map(params, x, 3), step, 1e-12)


def test_crush_info_counts(params, rng):
    x = rng.uniform(size=(500, 2))
    _, info = flowmap.crush_map(params, x, 3, return_info=True)
    assert len(info.exact) == 3
    for e, m, i in zip(info.exact, info.numeric, info.idle):
        assert e + m + i == 500
    assert info.idle[-1] == 500  # stage 0 never moves anything


@settings(max_examples=10)
@given(st.integers(0, 2**31))
def test_crush_agrees_with_direct_integration(seed):
    params = Params()
    x = np.random.default_rng(seed).uniform(size=(4, 2))
    n = 2
    u = ReversedField(params)
    t0 = params.T * (1 - tau(params, n) / params.tau_inf)
    direct = flowmap.integrate_batch(u, x, t0, params.T, 1e-11)
    assert torus_close(flowmap.crush_map(params, x, n, tol=1e-11), direct, 1e-7)


def test_translate_crush_preserves_cell_offset(params, rng):
    x = rng.uniform(size=(500, 2))
    n = 3
    y = flowmap.translate_crush(params, x, n)
    signs = cantor.decode_signs(x, n).astype(float)
    off_x = cantor.torus_delta(x, cantor.centers(THETA, signs))
    off_y = cantor.torus_delta(y, cantor.centers(phi(params.nu), signs))
    assert np.allclose(off_x, off_y)
    assert math.isclose(cantor.length(THETA, n) / 2, np.abs(off_x).max(), rel_tol=0.05)
