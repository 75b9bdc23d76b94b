"""Trajectories and flow maps.

Two routes to a trajectory: the closed form for points of the Cantor set
(each stage is a rigid translation of the cube containing the point), and a
Dormand-Prince 5(4) integrator that works for any field.  The integrator is
vectorised over a batch of starting points, each carrying its own step size.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import cantor
from .cantor import THETA, Address, phi, torus_delta
from .field import (ConstructionField, Params, ReversedField, VectorField, stage_window,
                    tau)
from .moving_blob import eta
from . import blob

MIN_STEP = 1e-14

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


class IntegrationError(RuntimeError):
    """Step size underflow; ``t`` and ``y`` hold the last accepted state."""

    def __init__(self, message, t, y):
        super().__init__(message)
        self.t = t
        self.y = y


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    err_est: np.ndarray
    provenance: str
    field_name: str = ""
    tol: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.ndim != 1 or len(t) != len(self.points):
            raise ValueError("times and points must have matching length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self, stream=None) -> str | None:
        """Dump ``t,x1..xd,err_est`` with 17 significant digits."""
        own = stream is None
        buf = io.StringIO() if own else stream
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"x{k + 1}" for k in range(self.d)] + ["err_est"])
        for t, x, e in zip(self.times, self.points, self.err_est):
            writer.writerow([format_float(t)] + [format_float(v) for v in x] + [format_float(e)])
        return buf.getvalue() if own else None


def format_float(v) -> str:
    """17 significant digits; negative zero prints as 0."""
    return f"{float(v) + 0.0:.17g}"


# ----------------------------------------------------------------------------
# the integrator


def _dopri_step(f, t, y, h, k1):
    ks = [k1]
    for s in range(1, 7):
        yi = y + h[:, None] * sum(a * k for a, k in zip(_A[s], ks))
        ks.append(f(t + _C[s] * h, yi))
    y5 = y + h[:, None] * sum(b * k for b, k in zip(_B5, ks) if b)
    err = h[:, None] * sum(e * k for e, k in zip(_E, ks) if e)
    return y5, err, ks[-1]


def integrate_batch(fld: VectorField, x0, t0: float, t1: float, tol: float = 1e-10,
                    record: bool = False, h0: float | None = None):
    """Integrate many starting points from t0 to t1 (either direction).

    Every point gets its own adaptive step.  Returns the end points (M, d);
    with ``record=True`` also a list of per-point (times, points, err) arrays.
    """
    y = np.atleast_2d(np.asarray(x0, float)).copy() % 1.0
    M = y.shape[0]
    sign = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0.0:
        return (y, [(np.array([t0]), y[k:k + 1].copy(), np.zeros(1)) for k in range(M)]) if record else y

    def f(t, x):
        return fld._evaluate(t, x, ("value",))["value"]

    t = np.full(M, float(t0))
    h = np.full(M, span / 100.0 if h0 is None else h0)
    alive = np.ones(M, dtype=bool)
    logs = [([t0], [y[k].copy()], [0.0]) for k in range(M)] if record else None
    k1 = np.zeros_like(y)
    k1[:] = f(t, y)

    while np.any(alive):
        idx = np.flatnonzero(alive)
        ti, yi = t[idx], y[idx]
        cap = np.asarray(fld.max_step(ti), float)
        remaining = np.abs(t1 - ti)
        hi = np.minimum(np.minimum(h[idx], cap), remaining)
        last = hi >= remaining * (1.0 - 1e-15)
        if np.any((hi < MIN_STEP) & ~last):
            bad = idx[(hi < MIN_STEP) & ~last][0]
            raise IntegrationError(f"step size underflow at t={t[bad]!r}", t[bad], y[bad].copy())
        y5, err, k7 = _dopri_step(f, ti, yi, sign * hi, k1[idx])
        scale = tol * (1.0 + np.maximum(np.abs(yi), np.abs(y5)))
        enorm = np.max(np.abs(err) / scale, axis=1)
        ok = enorm <= 1.0
        factor = np.clip(0.9 * np.maximum(enorm, 1e-10) ** -0.2, 0.2, 5.0)
        factor = np.where(ok, factor, np.minimum(factor, 1.0))
        acc = idx[ok]
        t[acc] = np.where(last[ok], t1, ti[ok] + sign * hi[ok])
        y[acc] = y5[ok] % 1.0
        k1[acc] = k7[ok]
        h[idx] = hi * factor
        if record:
            errs = np.max(np.abs(err[ok]), axis=1)
            for j, k in enumerate(acc):
                logs[k][0].append(t[k])
                logs[k][1].append(y[k].copy())
                logs[k][2].append(errs[j])
        alive[acc[last[ok]]] = False
    if record:
        return y, [(np.asarray(a), np.asarray(b), np.asarray(c)) for a, b, c in logs]
    return y


def integrate(fld: VectorField, x0, t0: float, t1: float, tol: float = 1e-10) -> Trajectory:
    """Adaptive Dormand-Prince trajectory of one point, one sample per accepted step."""
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got {t0}, {t1}")
    x0 = np.asarray(x0, float)
    if x0.shape != (fld.d,):
        raise ValueError(f"start point must have shape ({fld.d},)")
    _, logs = integrate_batch(fld, x0[None, :], t0, t1, tol, record=True)
    times, points, errs = logs[0]
    return Trajectory(times, points, errs, provenance=f"numeric(tol={tol:g})",
                      field_name=getattr(fld, "name", ""), tol=tol)


def ode_residual(fld: VectorField, traj: Trajectory) -> float:
    """Max over interior samples of |second-order difference velocity - field|."""
    if len(traj.times) < 3:
        raise ValueError("need at least three samples")
    t, x = traj.times, traj.points
    hm = np.diff(t)[:-1][:, None]
    hp = np.diff(t)[1:][:, None]
    fwd = torus_delta(x[2:], x[1:-1])
    bwd = torus_delta(x[1:-1], x[:-2])
    vel = (hm**2 * fwd + hp**2 * bwd) / (hm * hp * (hm + hp))
    val = fld._evaluate(t[1:-1], x[1:-1], ("value",))["value"]
    return float(np.max(np.linalg.norm(vel - val, axis=1)))


# ----------------------------------------------------------------------------
# closed-form trajectories


def analytic_stage_step(params: Params, i: int, address: Address, y) -> np.ndarray:
    """Where stage i carries a point of the closed start cube of ``address``."""
    if address.n != i + 1:
        raise ValueError(f"stage {i} needs a depth-{i + 1} address")
    start = cantor.shifted_center(params.nu, address)
    side = cantor.length(phi(params.nu), i + 1)
    y = np.asarray(y, float)
    if not np.all(cantor.in_closed_cube(y, start, side)):
        raise ValueError("point outside the stage start cube; the closed form does not apply")
    return (y - start + cantor.center(THETA, address)) % 1.0


def stage_start_point(params: Params, address: Address, i: int) -> np.ndarray:
    """Position at tau_i of the Cantor point coded by ``address``."""
    x = cantor.limit_point(phi(params.nu), address)
    if i == 0:
        return x
    a = address.truncate(i)
    return (x - cantor.center(phi(params.nu), a) + cantor.center(THETA, a)) % 1.0


def analytic_cantor_trajectory(params: Params, address: Address, t) -> np.ndarray:
    """Exact path of the depth-N Cantor point along v, at time(s) t in [0, tau_N]."""
    n_stages = min(address.n, params.depth)
    t = np.asarray(t, float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0) or np.any(t > tau(params, n_stages) * (1 + 1e-12)):
        raise ValueError(f"times must lie in [0, tau_{n_stages}]")
    out = np.empty((t.size, address.d))
    for i in range(n_stages + 1):
        lo = tau(params, i)
        hi = tau(params, i + 1) if i < n_stages else np.inf
        sel = (t >= lo) & (t < hi)
        if not np.any(sel):
            continue
        y = stage_start_point(params, address, i)
        if i == n_stages:
            out[sel] = y
            continue
        a = address.truncate(i + 1)
        disp = torus_delta(cantor.center(THETA, a), cantor.shifted_center(params.nu, a))
        t_s, t_e = stage_window(params, i)
        e = eta((t[sel] - t_s) / (t_e - t_s))
        out[sel] = (y + np.multiply.outer(e, disp)) % 1.0
    return out[0] if scalar else out


# ----------------------------------------------------------------------------
# crushing maps


def translate_crush(params: Params, x, n: int) -> np.ndarray:
    """Composed stage translations undone: x - P^n_Theta(s) + P^n_Phi(s), s the depth-n dyadic code of x."""
    x = np.atleast_2d(np.asarray(x, float))
    if n == 0:
        return x % 1.0
    signs = cantor.decode_signs(x, n).astype(float)
    return (x - cantor.centers(THETA, signs) + cantor.centers(phi(params.nu), signs)) % 1.0


def core_mask(params: Params, x, n: int) -> np.ndarray:
    """Points whose offset in their depth-n dyadic cell lies in the central side-l^n_Phi cube."""
    x = np.atleast_2d(np.asarray(x, float))
    if n == 0:
        return np.ones(len(x), dtype=bool)
    c = cantor.dyadic_cell_center(x, n)
    return cantor.in_closed_cube(x, c, cantor.length(phi(params.nu), n), atol=0.0)


@dataclass
class CrushInfo:
    """Per-stage counts of how points were moved: exactly, numerically, or not at all."""

    exact: list[int] = dc_field(default_factory=list)
    numeric: list[int] = dc_field(default_factory=list)
    idle: list[int] = dc_field(default_factory=list)


def pull_back_stage(params: Params, i: int, y, tol: float = 1e-9, u: ReversedField | None = None,
                    info: CrushInfo | None = None) -> np.ndarray:
    """Pull points from time tau_{i+1} back to tau_i along v (i.e. forward along u)."""
    y = np.atleast_2d(np.asarray(y, float)) % 1.0
    u = ReversedField(params) if u is None else u
    info = CrushInfo() if info is None else info
    signs = cantor.decode_signs(y, i + 1).astype(float)
    end = cantor.centers(THETA, signs)
    start = cantor.shifted_centers(params.nu, signs)
    disp = torus_delta(end, start)
    lam = cantor.length(phi(params.nu), i + 1)
    reach = lam * blob.bump_table(params.theta).support
    if np.all(disp == 0.0):
        info.exact.append(0)
        info.numeric.append(0)
        info.idle.append(len(y))
        return y
    rel = torus_delta(y, end)
    core = np.all(np.abs(rel) <= 0.5 * lam, axis=1)
    # bounding box of the swept inflated support, in coordinates relative to the end center
    lo = np.minimum(0.0, -disp) - reach
    hi = np.maximum(0.0, -disp) + reach
    swept = np.all((rel > lo) & (rel < hi), axis=1) & ~core
    out = y.copy()
    out[core] = (y[core] - end[core] + start[core]) % 1.0
    if np.any(swept):
        T = params.T
        t0 = T * (1.0 - tau(params, i + 1) / params.tau_inf)
        t1 = T * (1.0 - tau(params, i) / params.tau_inf)
        out[swept] = integrate_batch(u, y[swept], t0, t1, tol)
    info.exact.append(int(core.sum()))
    info.numeric.append(int(swept.sum()))
    info.idle.append(int(len(y) - core.sum() - swept.sum()))
    return out


def crush_map(params: Params, x, n: int, tol: float = 1e-9, return_info: bool = False):
    """Image of x under the backward flow of v from tau_n to 0, i.e. under u over [T(1 - tau_n/tau_inf), T].

    Points in the moving core of a stage are translated in closed form,
    points the blob never reaches stay put, and the thin remainder (the
    cutoff shell) is integrated numerically.
    """
    if not 0 <= n <= params.depth:
        raise ValueError(f"generation must lie in 0..{params.depth}")
    y = np.atleast_2d(np.asarray(x, float)) % 1.0
    info = CrushInfo()
    u = ReversedField(params)
    for i in range(n - 1, -1, -1):
        y = pull_back_stage(params, i, y, tol, u, info)
    return (y, info) if return_info else y


@dataclass(frozen=True)
class FlowMapReport:
    grid: int
    n: int
    fraction_in_cantor: float
    core_fraction: float
    core_contained: float
    volume: float
    density_ratio: float
    npoints: int
    images: np.ndarray | None = None
    starts: np.ndarray | None = None


def analytic_reversed_trajectory(params: Params, address: Address, t) -> np.ndarray:
    """Closed-form u-trajectory from the end point of the Cantor path, at u-time(s) t in [0, T].

    Before u-time T(1 - tau_N/tau_inf) the truncated field vanishes and the
    point rests; afterwards it retraces the v-path backwards.
    """
    t = np.asarray(t, float)
    n_stages = min(address.n, params.depth)
    s = params.tau_inf * (1.0 - t / params.T)
    return analytic_cantor_trajectory(params, address, np.minimum(s, tau(params, n_stages)))
