"""Norm estimates, exponent fits, Hoelder quotients, divergence checks and the collapse report.

All blobs of one stage are translates of each other with identical profile,
so per-stage norms are computed on a single blob at the time where its
amplitude peaks and then multiplied by the blob count where the norm is
additive.  Sup norms are lattice estimates refined by a bounded scalar search
along each axis; they are estimates, not certified bounds.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import blob, cantor
from .cantor import THETA, Address, phi
from .field import Params, StageField, VectorField, stage_window, tau
from .flowmap import FlowMapReport, core_mask, crush_map, translate_crush
from .moving_blob import eta

RAMP_NODES = 33
GAUSS_NODES = 32


@dataclass(frozen=True)
class NormReport:
    stage: int
    sup_norm: float
    grad_sup_norm: float
    sobolev_norm: float
    p: float
    time_deriv_sup: float
    resolution: int
    blob_count: int

    def to_dict(self) -> dict:
        return {"norm_report": asdict(self)}


@dataclass(frozen=True)
class ExponentFit:
    quantity: str
    slope: float
    predicted: float
    residual: float
    stages: tuple[int, ...]

    @property
    def deviation(self) -> float:
        return self.slope - self.predicted

    def to_dict(self) -> dict:
        out = asdict(self)
        out["stages"] = list(self.stages)
        out["deviation"] = self.deviation
        return {"exponent_fit": out}


# ----------------------------------------------------------------------------
# lattices over one blob


def ramp_adapted_nodes(delta: float, per_segment: int = RAMP_NODES) -> np.ndarray:
    """Local 1-d nodes: the two cutoff ramps and the plateau, each with ``per_segment`` nodes."""
    tab = blob.bump_table(delta)
    a, b = tab.plateau, tab.support
    ramp = np.linspace(a, b, per_segment)
    plateau = np.linspace(-a, a, per_segment)
    return np.unique(np.concatenate([-ramp[::-1], plateau, ramp]))


def gauss_segments(delta: float, per_segment: int = GAUSS_NODES):
    """Composite Gauss-Legendre nodes/weights over the blob support, split at the ramps."""
    tab = blob.bump_table(delta)
    edges = [-tab.support, -tab.plateau, tab.plateau, tab.support]
    g, w = np.polynomial.legendre.leggauss(per_segment)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(0.5 * (lo + hi) + half * g)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _tensor(nodes_1d: np.ndarray, d: int) -> np.ndarray:
    mesh = np.meshgrid(*([nodes_1d] * d), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, d)


def _reference_blob(params: Params, i: int):
    st = StageField(params, i)
    address = Address(((1,) * params.d,) * (i + 1))
    return st, st.blob_for(address)


def _peak_time(st: StageField) -> float:
    return 0.5 * (st.t_s + st.t_e)


def _refine_max(fun, x_best: np.ndarray, step: float) -> float:
    """Bounded scalar maximisation along each axis around the lattice maximiser."""
    best = fun(x_best[None, :])[0]
    x = x_best.copy()
    for k in range(len(x)):
        def neg(s, k=k):
            y = x.copy()
            y[k] = s
            return -fun(y[None, :])[0]
        res = minimize_scalar(neg, bounds=(x[k] - step, x[k] + step), method="bounded",
                              options={"xatol": step * 1e-6})
        if -res.fun > best:
            best = -res.fun
            x[k] = res.x
    return float(best)


def _sup_over_lattice(fun, pts: np.ndarray, step: float, refine: bool) -> float:
    vals = fun(pts)
    k = int(np.argmax(vals))
    best = float(vals[k])
    if refine and best > 0:
        best = max(best, _refine_max(fun, pts[k], step))
    return best


def stage_norms(params: Params, i: int, p: float | None = None, resolution: int = RAMP_NODES,
                time_samples: int = 33, refine: bool = True) -> NormReport:
    """Sup, gradient sup, W^{1,p} and time-derivative sup norms of the stage field v_i."""
    p = params.p if p is None else p
    if p < 1:
        raise ValueError("p must be at least 1")
    st, spec = _reference_blob(params, i)
    lam, d = st.lam, params.d
    count = 2 ** ((i + 1) * d)
    t_peak = _peak_time(st)
    xp = np.asarray(spec.x_s) + spec.displacement * 0.5
    local = ramp_adapted_nodes(st.delta, resolution)
    step = lam * float(np.max(np.diff(local)))
    pts = xp + lam * _tensor(local, d)

    def speed(x):
        return np.linalg.norm(st._evaluate(np.full(len(x), t_peak), x, ("value",))["value"], axis=1)

    def grad(x):
        jac = st._evaluate(np.full(len(x), t_peak), x, ("jacobian",))["jacobian"]
        return np.linalg.norm(jac, axis=(1, 2))

    sup = _sup_over_lattice(speed, pts, step, refine)
    gsup = _sup_over_lattice(grad, pts, step, refine)

    # W^{1,p}: composite Gauss-Legendre over the support, times the blob count
    gn, gw = gauss_segments(st.delta)
    qpts = xp + lam * _tensor(gn, d)
    qw = np.prod(_tensor(gw, d), axis=1) * lam**d
    ev = st._evaluate(np.full(len(qpts), t_peak), qpts, ("value", "jacobian"))
    integrand = np.linalg.norm(ev["value"], axis=1) ** p + np.linalg.norm(ev["jacobian"], axis=(1, 2)) ** p
    one_blob = math.fsum(qw * integrand)
    sobolev = (count * one_blob) ** (1.0 / p)

    # time derivative: the sup moves in time, so sample the blob's local time too
    taus = (np.arange(time_samples) + 0.5) / time_samples
    best, best_arg = 0.0, None
    for s in taus:
        t = st.t_s + s * (st.t_e - st.t_s)
        centre = np.asarray(spec.x_s) + spec.displacement * float(eta(s))
        xs = centre + lam * _tensor(local, d)
        vals = np.linalg.norm(st._evaluate(np.full(len(xs), t), xs, ("dt",))["dt"], axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, best_arg = float(vals[k]), (t, xs[k])
    if refine and best_arg is not None:
        t_b, x_b = best_arg
        dt_win = (st.t_e - st.t_s) / time_samples

        def dtn(z):
            return np.linalg.norm(st._evaluate(np.full(len(z), t_b), z, ("dt",))["dt"], axis=1)

        best = max(best, _refine_max(dtn, x_b, step))
        res = minimize_scalar(
            lambda t: -np.linalg.norm(st._evaluate(np.array([t]), x_b[None, :], ("dt",))["dt"]),
            bounds=(t_b - dt_win, t_b + dt_win), method="bounded")
        best = max(best, float(-res.fun))
    return NormReport(i, sup, gsup, sobolev, p, best, resolution, count)


# ----------------------------------------------------------------------------
# exponent fits


def predicted_slopes(params: Params, p: float | None = None) -> dict[str, float]:
    p = params.p if p is None else p
    nu, beta, d = params.nu, params.beta, params.d
    return {
        "sup_norm": -beta,
        "grad_sup_norm": 1.0 + nu - beta,
        "sobolev_norm": ((1.0 + nu - beta) * p - d * nu) / p,
        "time_deriv_sup": -(2.0 * beta - nu - 1.0),
    }


def fit_line(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and RMS residual."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def fit_exponents(params: Params, stages=range(1, 7), p: float | None = None,
                  reports: list[NormReport] | None = None, **norm_kw) -> list[ExponentFit]:
    """Log2 slopes of the stage norms against the stage index."""
    stages = tuple(stages)
    if len(stages) < 3:
        raise ValueError("need at least three stages to fit")
    p = params.p if p is None else p
    if reports is None:
        reports = [stage_norms(params, i, p, **norm_kw) for i in stages]
    pred = predicted_slopes(params, p)
    fits = []
    for name, slope_pred in pred.items():
        y = [math.log2(getattr(r, name)) for r in reports]
        slope, _, resid = fit_line(stages, y)
        fits.append(ExponentFit(name, slope, slope_pred, resid, stages))
    return fits


# ----------------------------------------------------------------------------
# Hoelder quotients


def holder_quotient(fld: VectorField, t_range: tuple[float, float], alpha: float,
                    samples: int = 2000, scales=tuple(2.0 ** -k for k in range(3, 11)),
                    seed: int = 0) -> dict[float, float]:
    """Max over random pairs at each separation r of |f(z1) - f(z2)| / r^alpha, z = (t, x)."""
    if not 0.0 <= alpha:
        raise ValueError("alpha must be non-negative")
    rng = np.random.default_rng(seed)
    d = fld.d
    t_lo, t_hi = t_range
    out = {}
    for r in scales:
        t1 = rng.uniform(t_lo, t_hi, samples)
        x1 = rng.uniform(size=(samples, d))
        direction = rng.normal(size=(samples, d + 1))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        t2 = np.clip(t1 + r * direction[:, 0], t_lo, t_hi)
        x2 = x1 + r * direction[:, 1:]
        sep = np.sqrt((t2 - t1) ** 2 + np.sum((x2 - x1) ** 2, axis=1))
        f1 = fld._evaluate(t1, x1, ("value",))["value"]
        f2 = fld._evaluate(t2, x2 % 1.0, ("value",))["value"]
        diff = np.linalg.norm(f1 - f2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(sep > 0, diff / sep**alpha, 0.0)
        out[float(r)] = float(np.max(q))
    return out


def holder_slope(quotients: dict[float, float]) -> float:
    """Slope of log2(max quotient) against log2(separation); negative means growth as r shrinks."""
    r = np.array(sorted(quotients))
    q = np.array([quotients[k] for k in r])
    keep = q > 0
    if keep.sum() < 2:
        return 0.0
    slope, _, _ = fit_line(np.log2(r[keep]), np.log2(q[keep]))
    return slope


# ----------------------------------------------------------------------------
# divergence


@dataclass(frozen=True)
class DivergenceReport:
    trace_max: float
    fd_max: dict
    fd_slope: float
    samples: int

    def to_dict(self) -> dict:
        return {"divergence": {"trace_max": self.trace_max,
                               "fd_max": {format(h, ".0e"): v for h, v in self.fd_max.items()},
                               "fd_slope": self.fd_slope, "samples": self.samples}}


def fd_divergence(fld: VectorField, t, x, h: float) -> np.ndarray:
    """Central-difference divergence at (t, x)."""
    M, d = x.shape
    div = np.zeros(M)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        fp = fld._evaluate(t, x + e, ("value",))["value"][:, k]
        fm = fld._evaluate(t, x - e, ("value",))["value"][:, k]
        div += (fp - fm) / (2.0 * h)
    return div


def divergence_check(fld: VectorField, t, x, hs=(1e-3, 1e-4, 1e-5)) -> DivergenceReport:
    """Analytic trace max and the log-log slope of max |FD divergence| against h.

    The slope is NaN when the finite-difference divergence vanishes at every h.
    """
    t = np.broadcast_to(np.asarray(t, float), (len(x),)).copy()
    jac = fld._evaluate(t, x, ("jacobian",))["jacobian"]
    trace = float(np.max(np.abs(np.trace(jac, axis1=1, axis2=2)))) if len(x) else 0.0
    fd = {float(h): float(np.max(np.abs(fd_divergence(fld, t, x, h)))) for h in hs}
    vals = np.array([fd[h] for h in fd])
    if np.all(vals > 0):
        slope, _, _ = fit_line(np.log10(list(fd)), np.log10(vals))
    else:
        slope = float("nan")
    return DivergenceReport(trace, fd, slope, len(x))


# ----------------------------------------------------------------------------
# dimension and measure


def counted_box_dimension(nu: float, d: int, n: int) -> float:
    """Occupied boxes of side l^n_Phi counted directly from the generation-n centers."""
    side = cantor.length(phi(nu), n)
    signs = cantor.address_array(n, d).astype(float)
    c = cantor.centers(phi(nu), signs)
    boxes = np.unique(np.floor(c / side + 1e-9).astype(np.int64), axis=0)
    return math.log(len(boxes)) / math.log(1.0 / side)


def jittered_grid(M: int, d: int, seed: int = 0) -> np.ndarray:
    """One uniform point per cell of the M^d grid."""
    rng = np.random.default_rng(seed)
    idx = np.stack(np.meshgrid(*([np.arange(M)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return (idx + rng.uniform(size=idx.shape)) / M


def collapse_report(params: Params, M: int, n: int, seed: int = 0, tol: float = 1e-9,
                    keep_points: bool = False) -> FlowMapReport:
    """Push a jittered M^d grid through the generation-n crushing map and tally containment."""
    if not 0 <= n <= params.depth:
        raise ValueError(f"generation must lie in 0..{params.depth}")
    x = jittered_grid(M, params.d, seed)
    y = crush_map(params, x, n, tol=tol)
    inside = cantor.in_generation_set(y, params.nu, n) if n else np.ones(len(x), bool)
    core = core_mask(params, x, n)
    core_ok = float(np.mean(inside[core])) if np.any(core) else 1.0
    volume = cantor.cantor_volume(params.nu, params.d, n)
    return FlowMapReport(
        grid=M, n=n, fraction_in_cantor=float(np.mean(inside)), core_fraction=float(np.mean(core)),
        core_contained=core_ok, volume=volume, density_ratio=1.0 / volume, npoints=len(x),
        images=y if keep_points else None, starts=x if keep_points else None,
    )


def translated_cell_fraction(params: Params, x, n: int) -> float:
    """Share of points whose composed-translation image lies in the translated cell Q(P^n_Phi, l^n_Theta)."""
    x = np.atleast_2d(np.asarray(x, float))
    if n == 0:
        return 1.0
    y = translate_crush(params, x, n)
    c = cantor.centers(phi(params.nu), cantor.decode_signs(x, n).astype(float))
    return float(np.mean(cantor.in_closed_cube(y, c, cantor.length(THETA, n))))


def report_dict(report: FlowMapReport) -> dict:
    fields = {k: v for k, v in asdict(report).items() if k not in ("images", "starts")}
    return {"collapse_report": fields}


def dumps(obj) -> str:
    """JSON with sorted keys so identical runs give identical bytes."""
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")
