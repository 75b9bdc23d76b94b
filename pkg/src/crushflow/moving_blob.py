"""Translating blob: carries a cube of side lambda rigidly from x_s to x_e during [t_s, t_e].

The center follows ``x_p(t) = x_s + (x_e - x_s) eta(tau)`` with the smoothed step
``eta``; the field is the stationary blob rescaled to side lambda and
multiplied by the center speed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blob
from .cantor import in_closed_cube, torus_delta


def eta(x):
    """Smoothed step: 0 for x <= 0, 1 for x >= 1."""
    return blob.bump_cdf(np.asarray(x, float) - 0.5)


def eta_prime(x):
    return blob.bump(np.asarray(x, float) - 0.5)


def eta_second(x):
    return blob.bump_prime(np.asarray(x, float) - 0.5)


@dataclass(frozen=True)
class BlobSpec:
    x_s: tuple[float, ...]
    x_e: tuple[float, ...]
    t_s: float
    t_e: float
    lam: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "x_s", tuple(float(v) for v in self.x_s))
        object.__setattr__(self, "x_e", tuple(float(v) for v in self.x_e))
        if len(self.x_s) != len(self.x_e):
            raise ValueError("start and end points differ in dimension")
        if not self.t_s < self.t_e:
            raise ValueError(f"need t_s < t_e, got {self.t_s}, {self.t_e}")
        if self.lam <= 0:
            raise ValueError("cube side lambda must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("offset delta must lie in (0, 1)")

    @property
    def d(self) -> int:
        return len(self.x_s)

    @property
    def displacement(self) -> np.ndarray:
        return torus_delta(self.x_e, self.x_s)

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.displacement))

    @property
    def q(self) -> np.ndarray | None:
        dist = self.distance
        return None if dist == 0.0 else self.displacement / dist

    @property
    def duration(self) -> float:
        return self.t_e - self.t_s


def blob_kinematics(t, t_s, t_e):
    """(tau, eta, eta', eta'') of the normalised time."""
    tau = (np.asarray(t, float) - t_s) / (t_e - t_s)
    return tau, eta(tau), eta_prime(tau), eta_second(tau)


def blob_center(spec: BlobSpec, t):
    _, e, _, _ = blob_kinematics(t, spec.t_s, spec.t_e)
    e = np.asarray(e)[..., None]
    return (np.asarray(spec.x_s) + spec.displacement * e) % 1.0


def blob_speed(spec: BlobSpec, t):
    _, _, ep, _ = blob_kinematics(t, spec.t_s, spec.t_e)
    return spec.distance * ep / spec.duration


def evaluate_blobs(t, x, x_s, disp, t_s, t_e, lam, delta, want=("value",)):
    """Evaluate translating blobs at points x (M, d) and times t (M,) or scalar.

    ``x_s`` and ``disp`` may be per point (M, d), letting a whole stage of
    disjoint blobs be evaluated in one pass.  Returns a dict with the
    requested entries among ``value``, ``jacobian`` and ``dt``.
    """
    x = np.asarray(x, float)
    M, d = x.shape
    t = np.broadcast_to(np.asarray(t, float), (M,))
    x_s = np.broadcast_to(np.asarray(x_s, float), (M, d))
    disp = np.broadcast_to(np.asarray(disp, float), (M, d))
    out = {}
    if "value" in want:
        out["value"] = np.zeros((M, d))
    if "jacobian" in want:
        out["jacobian"] = np.zeros((M, d, d))
    if "dt" in want:
        out["dt"] = np.zeros((M, d))

    dist = np.linalg.norm(disp, axis=-1)
    duration = t_e - t_s
    tau, e, ep, epp = blob_kinematics(t, t_s, t_e)
    active = (dist > 0.0) & (tau > 0.0) & (tau < 1.0)
    if not np.any(active):
        return out
    center = x_s[active] + disp[active] * np.asarray(e)[active, None]
    local = torus_delta(x[active], center) / lam
    table = blob.bump_table(delta)
    near = np.all(np.abs(local) < table.support, axis=-1)
    idx = np.flatnonzero(active)[near]
    if idx.size == 0:
        return out
    local = local[near]
    q = disp[idx] / dist[idx, None]
    need_jac = "jacobian" in want or "dt" in want
    if need_jac:
        wv, wj = blob.w_and_jacobian(local, q, delta)
    else:
        wv = blob.w(local, q, delta)
    amp = dist[idx] * ep[idx] / duration
    if "value" in want:
        out["value"][idx] = amp[:, None] * wv
    if "jacobian" in want:
        out["jacobian"][idx] = (amp / lam)[:, None, None] * wj
    if "dt" in want:
        first = (dist[idx] * epp[idx] / duration**2)[:, None] * wv
        center_velocity = disp[idx] * (ep[idx] / duration)[:, None]
        second = -(amp / lam)[:, None] * np.einsum("mjk,mk->mj", wj, center_velocity)
        out["dt"][idx] = first + second
    return out


def _as_batch(t, x):
    x = np.asarray(x, float)
    single = x.ndim == 1
    return single, np.atleast_2d(x)


def _eval_spec(spec: BlobSpec, t, x, want):
    single, xb = _as_batch(t, x)
    out = evaluate_blobs(t, xb, spec.x_s, spec.displacement, spec.t_s, spec.t_e,
                         spec.lam, spec.delta, want)
    return {k: (v[0] if single else v) for k, v in out.items()}


def vtilde(spec: BlobSpec, t, x):
    """Velocity of the translating blob; identically zero when x_s == x_e."""
    return _eval_spec(spec, t, x, ("value",))["value"]


def vtilde_jacobian(spec: BlobSpec, t, x):
    return _eval_spec(spec, t, x, ("jacobian",))["jacobian"]


def vtilde_dt(spec: BlobSpec, t, x):
    return _eval_spec(spec, t, x, ("dt",))["dt"]


def analytic_blob_trajectory(spec: BlobSpec, x, t):
    """Closed-form path of a point starting in the closed start cube."""
    x = np.asarray(x, float)
    if not np.all(in_closed_cube(x, spec.x_s, spec.lam)):
        raise ValueError("closed form only valid inside the start cube; integrate numerically")
    _, e, _, _ = blob_kinematics(t, spec.t_s, spec.t_e)
    return (x + np.multiply.outer(e, spec.displacement)) % 1.0
