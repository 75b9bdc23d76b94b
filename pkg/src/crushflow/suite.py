"""Named verification checks, grouped by topic; each returns measured values and a verdict."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import analysis, blob, cantor, flowmap
from .cantor import THETA, Address, phi
from .field import (ConstructionField, MovingBlobField, Params, ReversedField, SteadyField,
                    StageField, make_field, stage_indices, stage_window, tau)
from .moving_blob import BlobSpec, analytic_blob_trajectory

INCLUSION_SAMPLES = 11


@dataclass
class CheckResult:
    name: str
    group: str
    passed: bool
    values: dict = dc_field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"group": self.group, "passed": bool(self.passed), "values": self.values,
                "seconds": round(self.seconds, 3)}


CHECKS: list[tuple[str, str, Callable]] = []


def check(group: str):
    def register(fn):
        CHECKS.append((fn.__name__.removeprefix("check_"), group, fn))
        return fn
    return register


def _random_address(rng, n, d) -> Address:
    return Address(tuple(tuple(int(s) for s in rng.choice([-1, 1], d)) for _ in range(n)))


# ----------------------------------------------------------------------------
# geometry


@check("geometry")
def check_cube_disjointness(params: Params, max_gen: int = 3):
    """Closed Cantor cubes are disjoint; open dyadic cubes are disjoint (they may touch)."""
    closed_gap, open_gap = math.inf, math.inf
    for n in range(1, max_gen + 1):
        signs = cantor.address_array(n, params.d).astype(float)
        gap = cantor.pairwise_min_separation(cantor.centers(phi(params.nu), signs))
        closed_gap = min(closed_gap, gap - cantor.length(phi(params.nu), n))
        gap = cantor.pairwise_min_separation(cantor.centers(THETA, signs))
        open_gap = min(open_gap, gap - cantor.length(THETA, n))
    return closed_gap > 0 and open_gap >= 0, {"cantor_gap": closed_gap, "dyadic_gap": open_gap}


@check("geometry")
def check_cube_nesting(params: Params, max_gen: int = 3):
    worst = math.inf
    for n in range(2, max_gen + 1):
        for scale in (phi(params.nu), THETA):
            signs = cantor.address_array(n, params.d).astype(float)
            child = cantor.centers(scale, signs)
            parent = cantor.centers(scale, signs[:, :-1])
            reach = np.abs(cantor.torus_delta(child, parent)).max(axis=1) + 0.5 * cantor.length(scale, n)
            worst = min(worst, float(np.min(0.5 * cantor.length(scale, n - 1) - reach)))
    return worst >= -1e-15, {"min_margin": worst}


@check("geometry")
def check_limit_point_containment(params: Params, max_gen: int = 3, depth: int = 12):
    rng = np.random.default_rng(7)
    worst = math.inf
    for _ in range(200):
        a = _random_address(rng, depth, params.d)
        for scale in (phi(params.nu), THETA):
            x = cantor.limit_point(scale, a)
            for n in range(1, max_gen + 1):
                c = cantor.center(scale, a.truncate(n))
                margin = 0.5 * cantor.length(scale, n) - float(np.abs(cantor.torus_delta(x, c)).max())
                worst = min(worst, margin)
    return worst >= -1e-15, {"min_margin": worst}


@check("geometry")
def check_dyadic_covering(params: Params, max_gen: int = 3):
    rng = np.random.default_rng(11)
    x = rng.uniform(size=(5000, params.d))
    misses = 0
    for n in range(1, max_gen + 1):
        signs = cantor.decode_signs(x, n).astype(float)
        c = cantor.centers(THETA, signs)
        misses += int(np.sum(~cantor.in_closed_cube(x, c, cantor.length(THETA, n), atol=0.0)))
        kids = 2 ** params.d * cantor.length(THETA, n + 1) ** params.d
        if abs(kids - cantor.length(THETA, n) ** params.d) > 1e-15:
            misses += 1
    return misses == 0, {"violations": misses}


@check("geometry")
def check_decode_roundtrip(params: Params, max_gen: int = 3):
    bad = 0
    for n in range(1, max_gen + 1):
        signs = cantor.address_array(n, params.d)
        back = cantor.decode_signs(cantor.centers(THETA, signs.astype(float)), n)
        bad += int(np.sum(np.any(back != signs, axis=(1, 2))))
        inside, found = cantor.generation_signs(cantor.centers(phi(params.nu), signs.astype(float)),
                                                params.nu, n)
        bad += int(np.sum(~inside)) + int(np.sum(np.any(found != signs, axis=(1, 2))))
    return bad == 0, {"violations": bad}


@check("geometry")
def check_theta_inclusion(params: Params, max_gen: int = 3):
    worst = math.inf
    for n in range(1, max_gen + 1):
        for a in cantor.all_addresses(n, params.d):
            for s in np.linspace(0.0, 1.0, INCLUSION_SAMPLES):
                worst = min(worst, cantor.moving_cube_clearance(params.nu, a, s, params.theta))
    return worst > 0, {"min_clearance": worst, "theta": params.theta}


@check("geometry")
def check_box_dimension(params: Params, max_gen: int = 10):
    target = params.d / (1.0 + params.nu)
    err = max(abs(cantor.box_dimension(params.nu, params.d, n) - target) for n in range(1, max_gen + 1))
    counted = analysis.counted_box_dimension(params.nu, params.d, 3)
    return err <= 1e-12 and abs(counted - target) <= 1e-12, {
        "max_error": err, "counted_n3": counted, "target": target}


# ----------------------------------------------------------------------------
# blobs


@check("blob")
def check_blob_interior_identity(params: Params):
    rng = np.random.default_rng(3)
    q = rng.normal(size=params.d)
    q /= np.linalg.norm(q)
    x = rng.uniform(-0.5, 0.5, size=(5000, params.d))
    err = float(np.max(np.abs(blob.w(x, q, params.theta) - q)))
    return err <= 1e-12, {"max_error": err}


@check("blob")
def check_blob_support(params: Params):
    rng = np.random.default_rng(4)
    q = np.ones(params.d) / math.sqrt(params.d)
    sup = blob.bump_table(params.theta).support
    x = rng.uniform(-1.0, 1.0, size=(20000, params.d))
    outside = np.any(np.abs(x) >= sup, axis=1)
    val = float(np.max(np.abs(blob.w(x[outside], q, params.theta)))) if np.any(outside) else 0.0
    return val == 0.0, {"max_outside": val}


@check("blob")
def check_blob_transport(params: Params, tol: float = 1e-10, npts: int = 20):
    spec = BlobSpec((0.3,) * params.d, tuple(0.3 + 0.15 * (k + 1) / params.d for k in range(params.d)),
                    0.0, 1.0, 0.2, params.theta)
    rng = np.random.default_rng(5)
    x0 = np.asarray(spec.x_s) + spec.lam * rng.uniform(-0.5, 0.5, size=(npts, params.d))
    y = flowmap.integrate_batch(MovingBlobField(spec), x0, spec.t_s, spec.t_e, tol)
    err = float(np.max(np.abs(cantor.torus_delta(y, analytic_blob_trajectory(spec, x0, spec.t_e)))))
    return err <= 1e-7, {"max_error": err, "points": npts}


# ----------------------------------------------------------------------------
# stages and trajectories


@check("stage")
def check_stage_time_support(params: Params, max_stage: int = 3):
    rng = np.random.default_rng(6)
    bad = 0
    for i in range(min(max_stage + 1, params.depth)):
        st = StageField(params, i)
        x = rng.uniform(size=(2000, params.d))
        lo, hi = tau(params, i), tau(params, i + 1)
        t_out = np.concatenate([rng.uniform(lo, st.t_s, 1000), rng.uniform(st.t_e, hi, 1000)])
        bad += int(np.count_nonzero(st._evaluate(t_out, x, ("value",))["value"]))
    t = rng.uniform(0, params.tau_inf, 5000)
    idx = stage_indices(params, t)
    for k, tk in zip(idx[:200], t[:200]):
        i = 0
        while tau(params, i + 1) <= tk:
            i += 1
        expected = i if tau(params, i) < tk else -1
        bad += int(k != expected)
    return bad == 0, {"violations": bad}


@check("stage")
def check_stage_transport(params: Params, stages=(0, 1, 2, 3), cubes: int = 3, tol: float = 1e-10):
    rng = np.random.default_rng(8)
    v = ConstructionField(params)
    worst = 0.0
    for i in stages:
        if i >= params.depth:
            continue
        for _ in range(cubes):
            a = _random_address(rng, i + 1, params.d)
            c = cantor.shifted_center(params.nu, a)
            pts = np.vstack([cantor.corners(c, cantor.length(phi(params.nu), i + 1)), c])
            y = flowmap.integrate_batch(v, pts, tau(params, i), tau(params, i + 1), tol)
            pred = np.array([flowmap.analytic_stage_step(params, i, a, q) for q in pts])
            worst = max(worst, float(np.max(np.abs(cantor.torus_delta(y, pred)))))
    return worst <= 1e-7, {"max_error": worst}


@check("trajectory")
def check_trajectory_claim(params: Params, addresses: int = 10, depth: int = 6, last: int = 4,
                           tol: float = 1e-10):
    rng = np.random.default_rng(9)
    v = ConstructionField(params)
    worst = 0.0
    for _ in range(addresses):
        a = _random_address(rng, depth, params.d)
        y = cantor.limit_point(phi(params.nu), a)
        t_prev = 0.0
        for i in range(1, last + 1):
            y = flowmap.integrate_batch(v, y[None, :], t_prev, tau(params, i), tol)[0]
            t_prev = tau(params, i)
            worst = max(worst, float(np.max(np.abs(cantor.torus_delta(
                y, flowmap.analytic_cantor_trajectory(params, a, t_prev))))))
    return worst <= 1e-6, {"max_error": worst, "addresses": addresses}


@check("trajectory")
def check_reversed_field_definition(params: Params, samples: int = 1000):
    rng = np.random.default_rng(10)
    u = ReversedField(params)
    v = ConstructionField(params)
    t = rng.uniform(0, params.T, samples)
    x = rng.uniform(size=(samples, params.d))
    lhs = u._evaluate(t, x, ("value",))["value"]
    rhs = -(params.tau_inf / params.T) * v._evaluate(params.tau_inf * (1 - t / params.T), x, ("value",))["value"]
    err = float(np.max(np.abs(lhs - rhs)))
    return err <= 1e-12, {"max_error": err}


@check("trajectory")
def check_reversal_identity(params: Params, grid: int = 6, max_gen: int = 3, tol: float = 1e-10):
    u = ReversedField(params)
    x = analysis.jittered_grid(grid, params.d, seed=12)
    worst = 0.0
    for n in range(1, min(max_gen, params.depth) + 1):
        a = flowmap.integrate_batch(u, x, params.T * (1 - tau(params, n) / params.tau_inf), params.T, tol)
        b = flowmap.crush_map(params, x, n, tol=tol)
        worst = max(worst, float(np.max(np.abs(cantor.torus_delta(a, b)))))
    return worst <= 1e-4, {"max_error": worst}


# ----------------------------------------------------------------------------
# divergence


def _divergence_samples(name: str, params: Params, n: int, rng):
    if name == "w":
        fld = make_field("w", params)
        return fld, np.zeros(n), rng.uniform(-0.6, 0.6, size=(n, params.d))
    if name == "vtilde":
        fld = make_field("vtilde", params)
        s = fld.spec
        return fld, rng.uniform(s.t_s, s.t_e, n), rng.uniform(size=(n, params.d))
    if name == "v2":
        st = StageField(params, min(2, params.depth - 1))
        return st, rng.uniform(st.t_s, st.t_e, n), rng.uniform(size=(n, params.d))
    if name == "v":
        return ConstructionField(params), rng.uniform(0, params.tau_inf, n), rng.uniform(size=(n, params.d))
    if name == "u":
        return ReversedField(params), rng.uniform(0, params.T, n), rng.uniform(size=(n, params.d))
    if name == "usteady":
        lifted = params.with_(d=max(params.d, 3))
        return SteadyField(lifted), np.zeros(n), rng.uniform(size=(n, lifted.d))
    raise ValueError(name)


def _divergence_check(name: str, params: Params, samples: int = 10_000):
    rng = np.random.default_rng(13)
    fld, t, x = _divergence_samples(name, params, samples, rng)
    rep = analysis.divergence_check(fld, t, x)
    slope_ok = (not math.isnan(rep.fd_slope) and abs(rep.fd_slope - 2.0) <= 0.2) or \
        max(rep.fd_max.values()) <= 1e-12
    return rep.trace_max <= 1e-9 and slope_ok, {
        "trace_max": rep.trace_max, "fd_slope": rep.fd_slope,
        "fd_max": {format(h, ".0e"): v for h, v in rep.fd_max.items()}}


for _name in ("w", "vtilde", "v2", "v", "u", "usteady"):
    def _make(name):
        def fn(params: Params):
            return _divergence_check(name, params)
        fn.__name__ = f"check_divergence_{name}"
        return fn
    check("divergence")(_make(_name))


# ----------------------------------------------------------------------------
# norms, Hoelder and collapse


def norm_fits(params: Params, stages=range(1, 7), ps=(1.0, 1.3)):
    """Exponent fits at each p; the p-independent norms are computed once."""
    stages = tuple(s for s in stages if s < params.depth)
    base = [analysis.stage_norms(params, i, ps[0]) for i in stages]
    out = {ps[0]: analysis.fit_exponents(params, stages, ps[0], reports=base)}
    for p in ps[1:]:
        reps = [analysis.stage_norms(params, i, p) for i in stages]
        out[p] = analysis.fit_exponents(params, stages, p, reports=reps)
    return out, base


_NORM_CACHE: dict = {}


def _cached_fits(params: Params):
    if params not in _NORM_CACHE:
        _NORM_CACHE[params] = norm_fits(params)
    return _NORM_CACHE[params]


def _slope_check(params: Params, quantity: str, p: float, tolerance: float):
    fits, _ = _cached_fits(params)
    fit = next(f for f in fits[p] if f.quantity == quantity)
    return abs(fit.deviation) <= tolerance, {
        "slope": fit.slope, "predicted": fit.predicted, "deviation": fit.deviation,
        "tolerance": tolerance, "p": p}


@check("norms")
def check_norm_sup_slope(params: Params):
    return _slope_check(params, "sup_norm", 1.0, 0.15)


@check("norms")
def check_norm_grad_slope(params: Params):
    return _slope_check(params, "grad_sup_norm", 1.0, 0.15)


@check("norms")
def check_norm_time_derivative_slope(params: Params):
    return _slope_check(params, "time_deriv_sup", 1.0, 0.15)


@check("norms")
def check_norm_sobolev_slope_p1(params: Params):
    return _slope_check(params, "sobolev_norm", 1.0, 0.2)


@check("norms")
def check_norm_sobolev_slope_p13(params: Params):
    return _slope_check(params, "sobolev_norm", 1.3, 0.2)


@check("norms")
def check_norm_sobolev_sign_flip(params: Params):
    fits, _ = _cached_fits(params)
    lo = next(f for f in fits[1.0] if f.quantity == "sobolev_norm").slope
    hi = next(f for f in fits[1.3] if f.quantity == "sobolev_norm").slope
    return lo < 0 < hi, {"slope_p1": lo, "slope_p13": hi, "threshold": params.p_threshold}


HOLDER_SAMPLES = 20_000


def holder_sweep(params: Params, alpha: float, samples: int = HOLDER_SAMPLES, seed: int = 0):
    v = ConstructionField(params)
    q = analysis.holder_quotient(v, (0.0, tau(params, params.depth)), alpha, samples, seed=seed)
    return q, analysis.holder_slope(q)


@check("holder")
def check_holder_bounded(params: Params):
    alpha = 0.5 * params.alpha_bound
    q, slope = holder_sweep(params, alpha)
    return slope >= -0.05, {"alpha": alpha, "slope": slope,
                            "quotients": {format(r, ".6g"): v for r, v in q.items()}}


@check("holder")
def check_holder_unbounded_control(params: Params):
    q, slope = holder_sweep(params, 1.5)
    return slope < -0.2, {"alpha": 1.5, "slope": slope,
                          "quotients": {format(r, ".6g"): v for r, v in q.items()}}


@check("collapse")
def check_measure_collapse(params: Params, grid: int = 64, n: int = 6):
    n = min(n, params.depth)
    rep = analysis.collapse_report(params, grid, n, keep_points=True)
    ratio = (cantor.length(phi(params.nu), n) / cantor.length(THETA, n)) ** params.d
    cells = analysis.translated_cell_fraction(params, rep.starts, n)
    exact_volume = 2.0 ** (-params.nu * params.d * n)
    ok = (rep.core_contained == 1.0 and cells == 1.0
          and abs(rep.core_fraction - ratio) <= 2.0 / grid
          and rep.volume == exact_volume and rep.density_ratio >= 1.0 / exact_volume)
    return ok, {**analysis.report_dict(rep)["collapse_report"], "translated_cell_fraction": cells,
                "cell_volume_ratio": ratio}


# ----------------------------------------------------------------------------
# steady lift


@check("steady")
def check_steady_divergence(params: Params, samples: int = 10_000):
    lifted = params.with_(d=max(params.d, 3))
    rng = np.random.default_rng(14)
    fld = SteadyField(lifted)
    x = rng.uniform(size=(samples, lifted.d))
    jac = fld._evaluate(np.zeros(samples), x, ("jacobian",))["jacobian"]
    trace = float(np.max(np.abs(np.trace(jac, axis1=1, axis2=2))))
    return trace <= 1e-9, {"trace_max": trace}


@check("steady")
def check_steady_trajectory(params: Params, eps: float = 0.5, depth: int = 6, tol: float = 1e-10):
    lifted = params.with_(d=max(params.d, 3))
    fld = SteadyField(lifted, eps)
    inner = fld.inner.params
    rng = np.random.default_rng(15)
    a = _random_address(rng, depth, inner.d)
    x_end = flowmap.analytic_cantor_trajectory(inner, a, tau(inner, min(depth, inner.depth)))
    start = np.append(x_end, 1.0 - eps)
    sigmas = np.linspace(0.0, eps, 11)[1:]
    worst, y, s_prev = 0.0, start, 0.0
    for s in sigmas:
        y = flowmap.integrate_batch(fld, y[None, :], s_prev, s, tol)[0]
        s_prev = s
        ref = flowmap.analytic_reversed_trajectory(inner, a, min(s / eps, 1.0))
        worst = max(worst, float(np.max(np.abs(cantor.torus_delta(y[:-1], ref)))))
        worst = max(worst, float(abs(cantor.torus_delta(y[-1], (1.0 - eps + s) % 1.0))))
    return worst <= 1e-5, {"max_error": worst, "eps": eps}


# ----------------------------------------------------------------------------
# runner


def select(only=None) -> list[tuple[str, str, Callable]]:
    """Checks whose name or group starts with any of the given prefixes."""
    if not only:
        return list(CHECKS)
    prefixes = [o.strip() for o in only if o.strip()]
    chosen = [c for c in CHECKS if any(c[0].startswith(p) or c[1].startswith(p) for p in prefixes)]
    if not chosen:
        raise ValueError(f"no checks match {only!r}")
    return chosen


def run_checks(params: Params, only=None) -> dict[str, CheckResult]:
    out = {}
    for name, group, fn in select(only):
        t0 = time.perf_counter()
        try:
            passed, values = fn(params)
        except Exception as exc:  # a crash is a failed check, not a failed run
            passed, values = False, {"error": f"{type(exc).__name__}: {exc}"}
        out[name] = CheckResult(name, group, bool(passed), values, time.perf_counter() - t0)
    return out
