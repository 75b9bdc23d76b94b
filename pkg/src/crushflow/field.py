"""The staged construction: stage times, per-stage blob fields, their sum, its time reversal and the steady lift.

Stage ``i`` moves every generation-(i+1) Cantor cube from its shifted center
onto the matching dyadic center during the middle third of
``(tau_i, tau_{i+1})``.  The infinite sum over stages is truncated at
``depth`` stages, after which the field is identically zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import cantor
from .cantor import THETA, Address, phi
from .moving_blob import BlobSpec, evaluate_blobs

TIME_SLACK = 1e-12


@dataclass(frozen=True)
class Params:
    d: int = 2
    nu: float = 0.75
    beta: float | None = None
    T: float = 1.0
    depth: int = 8
    p: float = 1.0
    alpha: float | None = None
    theta_scale: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension must be at least 2")
        if not 0.0 < self.nu < 1.0:
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")
        if self.beta is None:
            object.__setattr__(self, "beta", 1.0 - self.nu**2)
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.T <= 0:
            raise ValueError("final time T must be positive")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if not 0.0 < self.theta_scale * cantor.theta_margin(self.nu) < 1.0:
            raise ValueError("theta_scale must keep the blob offset inside (0, 1)")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 0.5 * self.alpha_bound)

    @property
    def theta(self) -> float:
        """Blob offset; ``theta_scale`` only exists to corrupt it on purpose in harness tests."""
        return self.theta_scale * cantor.theta_margin(self.nu)

    @property
    def tau_inf(self) -> float:
        return 1.0 / (2.0 ** (1.0 - self.beta) - 1.0)

    @property
    def p_threshold(self) -> float:
        """Integrability exponents below this keep the W^{1,p} norms bounded."""
        return self.d * self.nu / (1.0 + self.nu - self.beta)

    @property
    def alpha_bound(self) -> float:
        return min(self.beta / (1.0 - self.beta), self.beta / (1.0 + self.nu))

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)


def tau(params: Params, i) -> float:
    """Stage boundary times; ``i = math.inf`` gives the accumulation time."""
    if i == math.inf:
        return params.tau_inf
    return float(_stage_start(params, i))


def stage_window(params: Params, i: int) -> tuple[float, float]:
    """The middle third of (tau_i, tau_{i+1}) where stage i is active."""
    a, b = tau(params, i), tau(params, i + 1)
    return (2 * a + b) / 3.0, (a + 2 * b) / 3.0


def stage_floor(params: Params, t) -> np.ndarray:
    """Index i with tau_i <= t < tau_{i+1}, vectorised; t >= tau_inf maps to a huge index."""
    t = np.asarray(t, float)
    r = 1.0 - params.beta
    frac = 1.0 - t / params.tau_inf
    with np.errstate(divide="ignore", invalid="ignore"):
        guess = np.floor(-np.log2(np.where(frac > 0, frac, 1.0)) / r)
    guess = np.maximum(guess, 0.0)
    # correct the logarithm's rounding against the neighbouring stage times
    lo = (1.0 - 2.0 ** (-r * guess)) * params.tau_inf
    guess = np.where(lo > t, guess - 1, guess)
    hi = (1.0 - 2.0 ** (-r * (guess + 1))) * params.tau_inf
    guess = np.where(hi <= t, guess + 1, guess)
    return np.where(frac > 0, guess, np.iinfo(np.int32).max).astype(np.int64)


def _stage_start(params: Params, i) -> np.ndarray:
    r = 1.0 - params.beta
    return (1.0 - 2.0 ** (-r * np.asarray(i, float))) * params.tau_inf


def stage_indices(params: Params, t) -> np.ndarray:
    """Vectorised :func:`active_stage`; -1 marks 'no stage' (boundary time or t >= tau_inf)."""
    t = np.asarray(t, float)
    i = stage_floor(params, t)
    boundary = (t >= params.tau_inf) | (t == _stage_start(params, np.minimum(i, 10_000)))
    return np.where(boundary, -1, i)


def active_stage(params: Params, t: float) -> int | None:
    """The stage i with tau_i < t < tau_{i+1}; None at boundaries and from tau_inf on."""
    if t < -TIME_SLACK or t > params.tau_inf + TIME_SLACK:
        raise ValueError(f"time {t} outside [0, tau_inf]")
    i = int(stage_indices(params, t))
    return None if i < 0 else i


def stage_displacement(params: Params, i: int) -> float:
    """Per-coordinate distance a stage-i cube travels (zero at stage 0)."""
    return 0.25 * (cantor.length(THETA, i) - cantor.length(phi(params.nu), i))


# ----------------------------------------------------------------------------
# field handles


def _batch(t, x, d):
    x = np.asarray(x, float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got {xb.shape[-1]}")
    tb = np.broadcast_to(np.asarray(t, float), (xb.shape[0],)).copy()
    return single, tb, xb


class VectorField:
    """Evaluable field f(t, x) on the torus; subclasses fill in :meth:`_evaluate`."""

    name = "field"
    d: int

    def _evaluate(self, t, x, want):
        raise NotImplementedError

    def _call(self, t, x, key):
        single, tb, xb = _batch(t, x, self.d)
        out = self._evaluate(tb, xb, (key,))[key]
        return out[0] if single else out

    def value(self, t, x):
        return self._call(t, x, "value")

    def jacobian(self, t, x):
        return self._call(t, x, "jacobian")

    def time_derivative(self, t, x):
        return self._call(t, x, "dt")

    def __call__(self, t, x):
        return self.value(t, x)

    def max_step(self, t):
        """Largest step an integrator may take from time t (array-friendly)."""
        return np.full(np.shape(t), np.inf)


class ZeroField(VectorField):
    name = "zero"

    def __init__(self, d: int):
        self.d = d

    def _evaluate(self, t, x, want):
        M, d = x.shape
        shapes = {"value": (M, d), "jacobian": (M, d, d), "dt": (M, d)}
        return {k: np.zeros(shapes[k]) for k in want}


class ConstantField(VectorField):
    name = "constant"

    def __init__(self, c):
        self.c = np.asarray(c, float)
        self.d = self.c.size

    def _evaluate(self, t, x, want):
        M, d = x.shape
        out = {}
        if "value" in want:
            out["value"] = np.broadcast_to(self.c, (M, d)).copy()
        if "jacobian" in want:
            out["jacobian"] = np.zeros((M, d, d))
        if "dt" in want:
            out["dt"] = np.zeros((M, d))
        return out


class StationaryBlobField(VectorField):
    """The stationary blob w(x; q, delta) as a (time-independent) field on R^d."""

    name = "w"

    def __init__(self, q, delta: float):
        from . import blob

        self.q = blob.check_direction(q)
        self.delta = float(delta)
        self.d = self.q.size

    def _evaluate(self, t, x, want):
        from . import blob

        val, jac = blob.w_and_jacobian(x, self.q, self.delta)
        out = {"value": val, "jacobian": jac, "dt": np.zeros_like(val)}
        return {k: out[k] for k in want}


class MovingBlobField(VectorField):
    name = "vtilde"

    def __init__(self, spec: BlobSpec):
        self.spec = spec
        self.d = spec.d

    def _evaluate(self, t, x, want):
        s = self.spec
        return evaluate_blobs(t, x, s.x_s, s.displacement, s.t_s, s.t_e, s.lam, s.delta, want)

    def max_step(self, t):
        return np.full(np.shape(t), self.spec.duration / 4.0)


class StageField(VectorField):
    """v_i: one translating blob per generation-(i+1) address, supports pairwise disjoint."""

    def __init__(self, params: Params, i: int):
        if not 0 <= i < params.depth:
            raise ValueError(f"stage {i} outside 0..{params.depth - 1}")
        self.params = params
        self.i = i
        self.d = params.d
        self.name = f"v{i}"
        self.t_s, self.t_e = stage_window(params, i)
        self.lam = cantor.length(phi(params.nu), i + 1)
        self.delta = params.theta

    def blob_for(self, address: Address) -> BlobSpec:
        if address.n != self.i + 1:
            raise ValueError(f"stage {self.i} blobs are indexed by depth-{self.i + 1} addresses")
        return BlobSpec(
            x_s=cantor.shifted_center(self.params.nu, address),
            x_e=cantor.center(THETA, address),
            t_s=self.t_s, t_e=self.t_e, lam=self.lam, delta=self.delta,
        )

    @cached_property
    def blobs(self) -> list[BlobSpec]:
        return [self.blob_for(a) for a in cantor.all_addresses(self.i + 1, self.d)]

    def endpoints(self, x):
        """Blob start/end centers for the dyadic cell of each point of x (M, d)."""
        signs = cantor.decode_signs(x, self.i + 1).astype(float)
        x_s = cantor.shifted_centers(self.params.nu, signs)
        x_e = cantor.centers(THETA, signs)
        return x_s, x_e

    def _evaluate(self, t, x, want):
        x_s, x_e = self.endpoints(x)
        disp = cantor.torus_delta(x_e, x_s)
        return evaluate_blobs(t, x, x_s, disp, self.t_s, self.t_e, self.lam, self.delta, want)

    def max_step(self, t):
        return np.full(np.shape(t), (self.t_e - self.t_s) / 4.0)


class ConstructionField(VectorField):
    """v = sum of the stage fields, truncated after ``params.depth`` stages."""

    name = "v"

    def __init__(self, params: Params):
        self.params = params
        self.d = params.d
        self._stages: dict[int, StageField] = {}

    def stage(self, i: int) -> StageField:
        if i not in self._stages:
            self._stages[i] = StageField(self.params, i)
        return self._stages[i]

    def _evaluate(self, t, x, want):
        p = self.params
        if np.any(t < -TIME_SLACK) or np.any(t > p.tau_inf + TIME_SLACK):
            raise ValueError("time outside [0, tau_inf]")
        M, d = x.shape
        shapes = {"value": (M, d), "jacobian": (M, d, d), "dt": (M, d)}
        out = {k: np.zeros(shapes[k]) for k in want}
        stages = stage_indices(p, t)
        for i in np.unique(stages):
            if i < 0 or i >= p.depth:
                continue
            sel = stages == i
            part = self.stage(int(i))._evaluate(t[sel], x[sel], want)
            for k in want:
                out[k][sel] = part[k]
        return out

    def max_step(self, t):
        """A quarter of the middle-third window of the stage at (or, past tau_N, last before) t."""
        p = self.params
        i = np.minimum(stage_floor(p, np.maximum(t, 0.0)), p.depth - 1)
        return 2.0 ** (-(1.0 - p.beta) * (i + 1.0)) / 12.0


class ReversedField(VectorField):
    """u(t, x) = -(tau_inf / T) v(tau_inf (1 - t/T), x) on [0, T]."""

    name = "u"

    def __init__(self, params: Params):
        self.params = params
        self.v = ConstructionField(params)
        self.d = params.d

    def v_time(self, t):
        p = self.params
        return p.tau_inf * (1.0 - np.asarray(t, float) / p.T)

    def _evaluate(self, t, x, want):
        p = self.params
        if np.any(t < -TIME_SLACK * p.T) or np.any(t > p.T * (1 + TIME_SLACK)):
            raise ValueError(f"time outside [0, T={p.T}]")
        s = np.clip(self.v_time(t), 0.0, p.tau_inf)
        raw = self.v._evaluate(s, x, want)
        k = p.tau_inf / p.T
        out = {}
        if "value" in want:
            out["value"] = -k * raw["value"]
        if "jacobian" in want:
            out["jacobian"] = -k * raw["jacobian"]
        if "dt" in want:
            out["dt"] = k * k * raw["dt"]
        return out

    def max_step(self, t):
        p = self.params
        s = np.clip(self.v_time(t), 0.0, p.tau_inf)
        return self.v.max_step(s) * p.T / p.tau_inf


class SteadyField(VectorField):
    """Autonomous field in d >= 3 dimensions: the last coordinate plays the role of time.

    Outside the slab x_d in [1 - eps, 1] it is the constant unit vector e_d;
    inside, the first d-1 components are the (d-1)-dimensional reversed field
    (with T = 1) sped up by 1/eps.
    """

    name = "usteady"

    def __init__(self, params: Params, eps: float = 0.5):
        if params.d < 3:
            raise ValueError("the steady lift needs d >= 3")
        if not 0.0 < eps < 1.0:
            raise ValueError("slab width eps must lie in (0, 1)")
        self.params = params
        self.eps = float(eps)
        self.d = params.d
        self.inner = ReversedField(params.with_(d=params.d - 1, T=1.0))

    def slab_time(self, xd):
        return (np.asarray(xd, float) % 1.0 - (1.0 - self.eps)) / self.eps

    def _evaluate(self, t, x, want):
        M, d = x.shape
        eps = self.eps
        xd = x[:, -1] % 1.0
        inside = xd >= 1.0 - eps
        out = {}
        if "value" in want:
            out["value"] = np.zeros((M, d))
            out["value"][:, -1] = 1.0
        if "jacobian" in want:
            out["jacobian"] = np.zeros((M, d, d))
        if "dt" in want:
            out["dt"] = np.zeros((M, d))
        if not np.any(inside):
            return out
        s = np.clip(self.slab_time(xd[inside]), 0.0, 1.0)
        inner_want = set()
        if "value" in want:
            inner_want.add("value")
        if "jacobian" in want:
            inner_want |= {"jacobian", "dt"}
        raw = self.inner._evaluate(s, x[inside, :-1], tuple(inner_want))
        if "value" in want:
            out["value"][inside, :-1] = raw["value"] / eps
        if "jacobian" in want:
            jac = np.zeros((int(inside.sum()), d, d))
            jac[:, :-1, :-1] = raw["jacobian"] / eps
            jac[:, :-1, -1] = raw["dt"] / eps**2
            out["jacobian"][inside] = jac
        return out

    def max_step(self, t):
        p = self.inner.params
        smallest = tau(p, p.depth) - tau(p, p.depth - 1)
        return np.full(np.shape(t), self.eps * (p.T / p.tau_inf) * smallest / 12.0)


def make_field(name: str, params: Params, *, stage: int = 2, eps: float = 0.5,
               blob_spec: BlobSpec | None = None, q=None, delta: float | None = None) -> VectorField:
    """Field factory used by the CLI: w | vtilde | vi | v | u | usteady."""
    if name == "w":
        qv = np.ones(params.d) / math.sqrt(params.d) if q is None else q
        return StationaryBlobField(qv, params.theta if delta is None else delta)
    if name == "vtilde":
        if blob_spec is None:
            blob_spec = default_blob_spec(params.d)
        return MovingBlobField(blob_spec)
    if name == "vi":
        return StageField(params, stage)
    if name == "v":
        return ConstructionField(params)
    if name == "u":
        return ReversedField(params)
    if name == "usteady":
        return SteadyField(params, eps)
    raise ValueError(f"unknown field {name!r}; choose w, vtilde, vi, v, u or usteady")


def default_blob_spec(d: int) -> BlobSpec:
    """A moderately sized demonstration blob used when none is given."""
    x_s = np.full(d, 0.35)
    x_e = np.full(d, 0.35) + np.linspace(0.2, 0.1, d)
    return BlobSpec(tuple(x_s), tuple(x_e), 0.0, 1.0, 0.2, 0.5)


FIELD_NAMES = ("w", "vtilde", "vi", "v", "u", "usteady")
