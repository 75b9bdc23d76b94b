"""Cantor-cube geometry on the torus.

Generation-n cubes are named by an :class:`Address`, a sequence of sign
vectors choosing one of the ``2**d`` children at each level.  Two scale
sequences are supported: the shrinking one (``phi(nu)``, side
``2**(-(1+nu)n)``) and the dyadic one (``THETA``, side ``2**-n``).

Infinite addresses only ever appear truncated to a finite depth ``N``; the
truncation error of every limit point is at most ``length(scale, N) / 2``
per coordinate.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

POINT_ATOL = 1e-12


def torus_delta(a, b):
    """Minimum-image difference ``a - b`` on the unit torus, in [-1/2, 1/2)."""
    return (np.asarray(a, float) - np.asarray(b, float) + 0.5) % 1.0 - 0.5


def torus_reduce(x):
    return np.asarray(x, float) % 1.0


# ----------------------------------------------------------------------------
# addresses and scale sequences


@dataclass(frozen=True)
class Address:
    """Finite tuple of sign vectors; ``Address(())`` is the root (the whole torus)."""

    signs: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        signs = tuple(tuple(int(c) for c in s) for s in self.signs)
        object.__setattr__(self, "signs", signs)
        dims = {len(s) for s in signs}
        if len(dims) > 1:
            raise ValueError(f"sign vectors of mixed dimension: {sorted(dims)}")
        for s in signs:
            if any(c not in (-1, 1) for c in s):
                raise ValueError(f"sign vector {s} has entries outside {{-1, +1}}")

    @classmethod
    def from_array(cls, arr) -> "Address":
        arr = np.asarray(arr, dtype=int)
        return cls(tuple(tuple(row) for row in arr.reshape(len(arr), -1)))

    @classmethod
    def parse(cls, text: str) -> "Address":
        """Parse ``"+-,-+"``: one group of ``+``/``-`` per generation."""
        text = text.strip()
        if not text:
            raise ValueError("empty address string")
        groups = [g.strip() for g in text.split(",")]
        signs = []
        for g in groups:
            if not g or any(ch not in "+-" for ch in g):
                raise ValueError(f"malformed address group {g!r} in {text!r}")
            signs.append(tuple(1 if ch == "+" else -1 for ch in g))
        return cls(tuple(signs))

    def __str__(self) -> str:
        return ",".join("".join("+" if c > 0 else "-" for c in s) for s in self.signs)

    def __len__(self) -> int:
        return len(self.signs)

    @property
    def n(self) -> int:
        return len(self.signs)

    @property
    def d(self) -> int:
        if not self.signs:
            raise ValueError("the root address has no dimension")
        return len(self.signs[0])

    @property
    def parent(self) -> "Address":
        if not self.signs:
            raise ValueError("the root address has no parent")
        return Address(self.signs[:-1])

    def truncate(self, n: int) -> "Address":
        if n > self.n:
            raise ValueError(f"cannot truncate depth-{self.n} address to depth {n}")
        return Address(self.signs[:n])

    def array(self) -> np.ndarray:
        return np.asarray(self.signs, dtype=float).reshape(self.n, -1)


def all_addresses(n: int, d: int) -> Iterator[Address]:
    """Every element of S_n in dimension d (2**(n*d) of them)."""
    vectors = list(itertools.product((-1, 1), repeat=d))
    for combo in itertools.product(vectors, repeat=n):
        yield Address(combo)


def address_array(n: int, d: int) -> np.ndarray:
    """All depth-n addresses as an int array of shape (2**(n*d), n, d)."""
    bits = np.array(list(itertools.product((-1, 1), repeat=n * d)), dtype=int)
    return bits.reshape(-1, n, d)


@dataclass(frozen=True)
class ScaleSequence:
    """Constant ratio sequence psi_i = 2**(-nu); ``nu == 0`` is the dyadic sequence."""

    nu: float

    def __post_init__(self):
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError(f"nu must lie in [0, 1], got {self.nu}")

    @property
    def is_dyadic(self) -> bool:
        return self.nu == 0.0

    def psi(self, i: int) -> float:
        return 2.0 ** (-self.nu)


THETA = ScaleSequence(0.0)


def phi(nu: float) -> ScaleSequence:
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    return ScaleSequence(nu)


def length(scale: ScaleSequence, n) -> float:
    """Side length of generation-n cubes: ``prod(psi_i) / 2**n``."""
    n = np.asarray(n, float)
    if np.any(n < 0):
        raise ValueError("generation must be non-negative")
    out = 2.0 ** (-(1.0 + scale.nu) * n)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------------
# centers


def _center_sum(scale: ScaleSequence, signs: np.ndarray) -> np.ndarray:
    """1/2 + 1/4 sum_i s_i l^{i-1}; ``signs`` has shape (..., n, d)."""
    n = signs.shape[-2]
    weights = length(scale, np.arange(n)) if n else np.zeros(0)
    return 0.5 + 0.25 * np.einsum("...id,i->...d", signs, weights)


def center(scale: ScaleSequence, address: Address) -> np.ndarray:
    if address.n == 0:
        raise ValueError("the root address has no center (its cube is the whole torus)")
    return _center_sum(scale, address.array()) % 1.0


def shifted_center(nu: float, address: Address) -> np.ndarray:
    """Center of a Cantor cube after the earlier generations were moved onto the dyadic grid."""
    if address.n == 0:
        raise ValueError("the root address has no center")
    s = address.array()
    base = _center_sum(THETA, s[:-1])
    return (base + 0.25 * s[-1] * length(phi(nu), address.n - 1)) % 1.0


def shifted_centers(nu: float, signs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`shifted_center` for signs of shape (..., n, d)."""
    base = _center_sum(THETA, signs[..., :-1, :])
    n = signs.shape[-2]
    return (base + 0.25 * signs[..., -1, :] * length(phi(nu), n - 1)) % 1.0


def centers(scale: ScaleSequence, signs: np.ndarray) -> np.ndarray:
    return _center_sum(scale, np.asarray(signs, float)) % 1.0


def limit_point(scale: ScaleSequence, address: Address) -> np.ndarray:
    """Depth-N partial sum of the infinite-address point.

    The true limit of any extension of ``address`` lies within
    ``length(scale, N) / 2`` of the returned point in every coordinate.
    """
    if address.n < 1:
        raise ValueError("limit_point needs depth N >= 1")
    return center(scale, address)


def tail_bound(scale: ScaleSequence, n: int) -> float:
    return 0.5 * length(scale, n)


# ----------------------------------------------------------------------------
# dyadic decoding and membership


def decode_signs(x, n: int) -> np.ndarray:
    """Dyadic signs of points ``x`` (shape (..., d)) down to depth n, shape (..., n, d).

    A coordinate exactly on a dyadic grid line is assigned +1 (upper cell).
    """
    x = torus_reduce(x)
    cells = np.floor(x * 2.0**n).astype(np.int64)
    cells = np.minimum(cells, 2**n - 1)
    shifts = np.arange(n - 1, -1, -1)
    bits = (cells[..., None, :] >> shifts[:, None]) & 1
    return 2 * bits - 1


def decode_address(x, n: int) -> Address:
    x = np.asarray(x, float)
    if x.ndim != 1:
        raise ValueError("decode_address takes a single point; use decode_signs for batches")
    if n == 0:
        return Address(())
    return Address.from_array(decode_signs(x, n))


def dyadic_cell_center(x, n: int) -> np.ndarray:
    """Center of the depth-n dyadic cell containing x (same tie-break as decode)."""
    x = torus_reduce(x)
    cells = np.minimum(np.floor(x * 2.0**n), 2**n - 1)
    return (cells + 0.5) / 2.0**n


def in_closed_cube(x, c, side, atol: float = POINT_ATOL):
    return np.all(np.abs(torus_delta(x, c)) <= 0.5 * side + atol, axis=-1)


def in_open_cube(x, c, side):
    return np.all(np.abs(torus_delta(x, c)) < 0.5 * side, axis=-1)


def generation_signs(x, nu: float, n: int, atol: float = POINT_ATOL):
    """Greedy descent through the Cantor cubes.

    Returns ``(inside, signs)`` where ``inside`` flags points lying in some
    closed generation-n cube and ``signs`` holds the candidate address.
    """
    x = torus_reduce(x)
    scale = phi(nu)
    c = np.full(x.shape, 0.5)
    inside = np.ones(x.shape[:-1], dtype=bool)
    signs = np.empty(x.shape[:-1] + (n, x.shape[-1]), dtype=int)
    for k in range(1, n + 1):
        rel = torus_delta(x, c)
        s = np.where(rel >= 0.0, 1, -1)
        signs[..., k - 1, :] = s
        c = c + 0.25 * s * length(scale, k - 1)
        inside &= np.all(np.abs(torus_delta(x, c)) <= 0.5 * length(scale, k) + atol, axis=-1)
    return inside, signs


def in_generation_set(x, nu: float, n: int, atol: float = POINT_ATOL):
    inside, _ = generation_signs(x, nu, n, atol)
    return inside if np.ndim(inside) else bool(inside)


def cantor_volume(nu: float, d: int, n: int) -> float:
    """Lebesgue measure of the generation-n union: 2**(n d) cubes of side l^n."""
    return 2.0 ** (-nu * d * n)


def box_dimension(nu: float, d: int, n: int) -> float:
    """log(#cubes) / log(1 / side) at generation n."""
    if n < 1:
        raise ValueError("box_dimension needs n >= 1")
    return (n * d * math.log(2.0)) / ((1.0 + nu) * n * math.log(2.0))


def theta_margin(nu: float) -> float:
    """Relative inflation of a moving cube that still fits inside its dyadic cell."""
    if not 0.0 < nu <= 1.0:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    return (2.0**nu - 1.0) / 8.0


def moving_cube_clearance(nu: float, address: Address, a: float, theta: float | None = None) -> float:
    """Gap between the inflated moving cube and the wall of its open dyadic cell.

    The cube of side ``(1 + theta) l^i_phi`` is centred on the point a fraction
    ``a`` of the way from the shifted center to the dyadic center.  A positive
    return value means the closed cube sits strictly inside the open cell.
    """
    if theta is None:
        theta = theta_margin(nu)
    i = address.n
    start = shifted_center(nu, address)
    end = center(THETA, address)
    xa = start + a * torus_delta(end, start)
    reach = np.abs(torus_delta(xa, end)) + 0.5 * (1.0 + theta) * length(phi(nu), i)
    return float(0.5 * length(THETA, i) - np.max(reach))


def corners(c, side) -> np.ndarray:
    """The 2**d corners of the cube of the given side centred at c."""
    c = np.asarray(c, float)
    offs = np.array(list(itertools.product((-0.5, 0.5), repeat=c.shape[-1])))
    return c + side * offs


def pairwise_min_separation(points: Sequence) -> float:
    """Smallest over pairs of the largest per-coordinate minimum-image gap."""
    pts = np.asarray(points, float)
    gaps = np.abs(torus_delta(pts[:, None, :], pts[None, :, :])).max(axis=-1)
    np.fill_diagonal(gaps, np.inf)
    return float(gaps.min())
