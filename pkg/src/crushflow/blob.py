"""Stationary blob: a divergence-free field equal to a fixed unit vector on the unit cube.

The field is built from stream functions multiplied by a smooth cutoff
``zeta_d``.  The cutoff is a mollified indicator; its profile reduces to the
cumulative integral of the standard bump, which is tabulated once and
interpolated with quintic Hermite pieces using the exact bump and its
derivative at the nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import BPoly

CDF_INTERVALS = 1024
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _bump_shape(x: float) -> float:
    return float(np.exp(1.0 / (x * x - 0.25))) if abs(x) < 0.5 else 0.0


@lru_cache(maxsize=None)
def bump_normalization() -> float:
    """The constant making the bump integrate to one."""
    mass, _ = quad(_bump_shape, -0.5, 0.5, epsabs=1e-15, epsrel=1e-13, limit=200)
    return 1.0 / mass


def _bump_and_slope(x):
    x = np.asarray(x, float)
    s = x * x - 0.25
    inside = s < 0.0
    safe = np.where(inside, s, -1.0)
    with np.errstate(under="ignore"):
        val = np.where(inside, bump_normalization() * np.exp(1.0 / safe), 0.0)
        slope = np.where(inside, val * (-2.0 * x / safe**2), 0.0)
    return val, slope


def bump(x):
    """c exp(1 / (x^2 - 1/4)) on (-1/2, 1/2), zero elsewhere."""
    return _bump_and_slope(x)[0]


def bump_prime(x):
    return _bump_and_slope(x)[1]


def mollifier(x, eps: float):
    return bump(np.asarray(x, float) / eps) / eps


@lru_cache(maxsize=None)
def _cdf_table() -> BPoly:
    nodes = np.linspace(-0.5, 0.5, CDF_INTERVALS + 1)
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    pts = 0.5 * (a + b)[:, None] + half[:, None] * _GAUSS_NODES
    pieces = (bump(pts) * _GAUSS_WEIGHTS).sum(axis=1) * half
    values = np.concatenate([[0.0], np.cumsum(pieces)])
    val, slope = _bump_and_slope(nodes)
    return BPoly.from_derivatives(nodes, np.stack([values, val, slope], axis=1))


def bump_cdf(z):
    """Integral of the bump from -infinity to z (0 below -1/2, 1 above 1/2)."""
    z = np.asarray(z, float)
    inner = _cdf_table()(np.clip(z, -0.5, 0.5))
    return np.where(z <= -0.5, 0.0, np.where(z >= 0.5, 1.0, inner))


# ----------------------------------------------------------------------------
# cutoffs


@dataclass(frozen=True)
class BumpTable:
    """Cutoff ``zeta_1`` for one offset delta.

    zeta_1 is the bump mollifier of width delta/8 convolved with the indicator
    of [-a, a], a = 1/2 + 3 delta/8.  It equals 1 on |x| <= 1/2 + 5 delta/16 and
    vanishes on |x| >= 1/2 + 7 delta/16.
    """

    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def eps(self) -> float:
        return self.delta / 8.0

    @property
    def half_width(self) -> float:
        return 0.5 + 3.0 * self.delta / 8.0

    @property
    def plateau(self) -> float:
        return self.half_width - 0.5 * self.eps

    @property
    def support(self) -> float:
        return self.half_width + 0.5 * self.eps

    def zeta1(self, x):
        return 1.0 - bump_cdf((np.abs(x) - self.half_width) / self.eps)

    def zeta1_derivatives(self, x):
        """(zeta_1, zeta_1', zeta_1'') at x."""
        x = np.asarray(x, float)
        u = (np.abs(x) - self.half_width) / self.eps
        val, slope = _bump_and_slope(u)
        z0 = 1.0 - bump_cdf(u)
        z1 = -np.sign(x) * val / self.eps
        z2 = -slope / self.eps**2
        return z0, z1, z2

    def zeta_d(self, x):
        return np.prod(self.zeta1(x), axis=-1)

    def zeta_d_derivatives(self, x):
        """zeta_d with its gradient (..., d) and Hessian (..., d, d)."""
        x = np.asarray(x, float)
        z0, z1, z2 = self.zeta1_derivatives(x)
        d = x.shape[-1]
        value = np.prod(z0, axis=-1)
        grad = np.empty_like(x)
        hess = np.empty(x.shape + (d,))
        for j in range(d):
            others = np.prod(np.delete(z0, j, axis=-1), axis=-1)
            grad[..., j] = z1[..., j] * others
            hess[..., j, j] = z2[..., j] * others
            for k in range(j + 1, d):
                rest = np.prod(np.delete(z0, [j, k], axis=-1), axis=-1)
                hess[..., j, k] = hess[..., k, j] = z1[..., j] * z1[..., k] * rest
        return value, grad, hess


@lru_cache(maxsize=64)
def bump_table(delta: float) -> BumpTable:
    return BumpTable(float(delta))


def zeta1(x, delta: float):
    return bump_table(delta).zeta1(x)


def zeta_d(x, delta: float):
    return bump_table(delta).zeta_d(x)


# ----------------------------------------------------------------------------
# stream functions and the stationary field


def _pairing_matrices(d: int):
    """Antisymmetric matrices A, B with w = A grad F1 + B grad F2."""
    if d < 2:
        raise ValueError("the blob field needs d >= 2")
    A = np.zeros((d, d))
    for m in range(d // 2):
        A[2 * m, 2 * m + 1] = 1.0
        A[2 * m + 1, 2 * m] = -1.0
    B = np.zeros((d, d))
    if d % 2:
        B[0, d - 1] = -1.0
        B[d - 1, 0] = 1.0
    return A, B


def _stream_weights(q):
    """Gradient g of the linear part of F1, so F1 = (g . x) zeta_d."""
    q = np.asarray(q, float)
    d = q.shape[-1]
    g = np.zeros_like(q)
    for m in range(d // 2):
        g[..., 2 * m + 1] = q[..., 2 * m]
        g[..., 2 * m] = -q[..., 2 * m + 1]
    return g


def check_direction(q) -> np.ndarray:
    q = np.asarray(q, float)
    if np.any(np.abs(np.linalg.norm(q, axis=-1) - 1.0) > 1e-12):
        raise ValueError("blob direction must be a unit vector")
    return q


def stream_F(x, q, delta: float):
    """Stream functions (F1, F2); F2 is None in even dimension."""
    x = np.asarray(x, float)
    q = check_direction(q)
    d = x.shape[-1]
    _pairing_matrices(d)
    zeta = zeta_d(x, delta)
    f1 = np.sum(_stream_weights(q) * x, axis=-1) * zeta
    f2 = q[..., d - 1] * x[..., 0] * zeta if d % 2 else None
    return f1, f2


def _stream_derivatives(x, q, delta):
    d = x.shape[-1]
    _, grad_z, hess_z = bump_table(delta).zeta_d_derivatives(x)
    zeta = bump_table(delta).zeta_d(x)
    g = np.broadcast_to(_stream_weights(q), x.shape)
    lin = np.sum(g * x, axis=-1)
    grad1 = g * zeta[..., None] + lin[..., None] * grad_z
    outer = g[..., :, None] * grad_z[..., None, :]
    hess1 = outer + np.swapaxes(outer, -1, -2) + lin[..., None, None] * hess_z
    if d % 2 == 0:
        return grad1, hess1, None, None
    qd = np.broadcast_to(np.asarray(q, float)[..., d - 1], x.shape[:-1])
    m = np.zeros_like(x)
    m[..., 0] = qd
    lin2 = qd * x[..., 0]
    grad2 = m * zeta[..., None] + lin2[..., None] * grad_z
    outer2 = m[..., :, None] * grad_z[..., None, :]
    hess2 = outer2 + np.swapaxes(outer2, -1, -2) + lin2[..., None, None] * hess_z
    return grad1, hess1, grad2, hess2


def w(x, q, delta: float):
    """Stationary blob field at points x (..., d) for unit direction q."""
    x = np.asarray(x, float)
    q = check_direction(q)
    A, B = _pairing_matrices(x.shape[-1])
    grad1, _, grad2, _ = _stream_derivatives(x, q, delta)
    out = grad1 @ A.T
    if grad2 is not None:
        out = out + grad2 @ B.T
    return out


def w_jacobian(x, q, delta: float):
    """Analytic Jacobian, ``J[..., j, k] = d w_j / d x_k``."""
    x = np.asarray(x, float)
    q = check_direction(q)
    A, B = _pairing_matrices(x.shape[-1])
    _, hess1, _, hess2 = _stream_derivatives(x, q, delta)
    jac = np.einsum("jl,...lk->...jk", A, hess1)
    if hess2 is not None:
        jac = jac + np.einsum("jl,...lk->...jk", B, hess2)
    return jac


def w_and_jacobian(x, q, delta: float):
    x = np.asarray(x, float)
    A, B = _pairing_matrices(x.shape[-1])
    grad1, hess1, grad2, hess2 = _stream_derivatives(x, q, delta)
    val = grad1 @ A.T
    jac = np.einsum("jl,...lk->...jk", A, hess1)
    if grad2 is not None:
        val = val + grad2 @ B.T
        jac = jac + np.einsum("jl,...lk->...jk", B, hess2)
    return val, jac
