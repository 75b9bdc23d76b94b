import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crushflow import cantor
from crushflow.cantor import THETA, Address, phi

NU = 0.75


def brute_center(scale, address):
    """Recursive center: start at 1/2 and step a quarter of the parent side."""
    c = np.full(address.d, 0.5)
    side = 1.0
    for s in address.signs:
        c = c + 0.25 * np.asarray(s) * side
        side *= 2.0 ** (-(1.0 + scale.nu))
    return c % 1.0


def addresses(max_n=4, d=2):
    signs = st.lists(st.sampled_from([-1, 1]), min_size=d, max_size=d).map(tuple)
    return st.lists(signs, min_size=1, max_size=max_n).map(lambda s: Address(tuple(s)))


# ----------------------------------------------------------------------------
# addresses


@pytest.mark.parametrize("text,signs", [
    ("+-", ((1, -1),)),
    ("+-,-+", ((1, -1), (-1, 1))),
    (" --,++ ", ((-1, -1), (1, 1))),
    ("+++", ((1, 1, 1),)),
])
def test_parse(text, signs):
    assert Address.parse(text).signs == signs


@pytest.mark.parametrize("bad", ["", "   ", "+-,", "+x", "+-,+", ",+-"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        Address.parse(bad)


@given(addresses(5, 3))
def test_str_roundtrip(a):
    assert Address.parse(str(a)) == a


def test_address_validation():
    with pytest.raises(ValueError):
        Address(((1, 2),))
    with pytest.raises(ValueError):
        Address(((1, 1), (1,)))
    with pytest.raises(ValueError):
        Address(()).parent


def test_parent_and_truncate():
    a = Address.parse("+-,--,++")
    assert a.parent == Address.parse("+-,--")
    assert a.truncate(1) == Address.parse("+-")
    with pytest.raises(ValueError):
        a.truncate(4)


@pytest.mark.parametrize("n,d", [(1, 2), (2, 2), (3, 2), (2, 3)])
def test_all_addresses_count_and_distinct(n, d):
    items = list(cantor.all_addresses(n, d))
    assert len(items) == 2 ** (n * d) == len(set(items))
    arr = cantor.address_array(n, d)
    assert arr.shape == (2 ** (n * d), n, d)
    assert {Address.from_array(x) for x in arr} == set(items)


# ----------------------------------------------------------------------------
# lengths and centers


@pytest.mark.parametrize("n,expected", [(0, 1.0), (1, 2 ** -1.75), (4, 2.0 ** -7), (8, 2.0 ** -14)])
def test_length(n, expected):
    assert cantor.length(phi(NU), n) == pytest.approx(expected, rel=1e-15)
    assert cantor.length(THETA, n) == 2.0 ** -n


def test_length_rejects_negative():
    with pytest.raises(ValueError):
        cantor.length(THETA, -1)


@pytest.mark.parametrize("nu", [-0.1, 0.0, 1.5])
def test_phi_rejects(nu):
    with pytest.raises(ValueError):
        phi(nu)


@given(addresses(6, 2), st.sampled_from([0.0, 0.3, 0.75, 1.0]))
def test_center_matches_recursion(a, nu):
    scale = cantor.ScaleSequence(nu)
    assert np.allclose(cantor.center(scale, a), brute_center(scale, a), atol=1e-15)


def test_center_examples():
    # generation-1 centers sit at 1/4 and 3/4 for every scale
    for scale in (THETA, phi(NU)):
        assert np.allclose(cantor.center(scale, Address.parse("-+")), [0.25, 0.75])
    assert np.allclose(cantor.center(THETA, Address.parse("--,--")), [0.125, 0.125])
    lphi = 2 ** -1.75
    assert np.allclose(cantor.center(phi(NU), Address.parse("--,--")), 0.25 - lphi / 4)


def test_root_center_rejected():
    with pytest.raises(ValueError):
        cantor.center(THETA, Address(()))
    with pytest.raises(ValueError):
        cantor.shifted_center(NU, Address(()))


@given(addresses(6, 2))
def test_shifted_center_definition(a):
    expected = cantor.center(THETA, a.parent) if a.n > 1 else np.full(a.d, 0.5)
    expected = expected + 0.25 * a.array()[-1] * cantor.length(phi(NU), a.n - 1)
    assert np.allclose(cantor.shifted_center(NU, a), expected % 1.0, atol=1e-15)
    batch = cantor.shifted_centers(NU, a.array()[None])[0]
    assert np.allclose(batch, cantor.shifted_center(NU, a), atol=1e-15)


def test_generation_one_shift_is_trivial():
    # l^0 = 1 for both scales, so the first shifted center is the first dyadic center
    for a in cantor.all_addresses(1, 2):
        assert np.allclose(cantor.shifted_center(NU, a), cantor.center(THETA, a))


# ----------------------------------------------------------------------------
# geometry, exhaustively


@pytest.mark.parametrize("n", [1, 2, 3])
def test_closed_cantor_cubes_disjoint(n):
    side = cantor.length(phi(NU), n)
    cs = [cantor.center(phi(NU), a) for a in cantor.all_addresses(n, 2)]
    for p, q in itertools.combinations(cs, 2):
        assert np.max(np.abs(cantor.torus_delta(p, q))) > side


@pytest.mark.parametrize("n", [1, 2, 3])
def test_open_dyadic_cubes_disjoint(n):
    side = cantor.length(THETA, n)
    cs = [cantor.center(THETA, a) for a in cantor.all_addresses(n, 2)]
    for p, q in itertools.combinations(cs, 2):
        assert np.max(np.abs(cantor.torus_delta(p, q))) >= side


@pytest.mark.parametrize("scale", [THETA, phi(NU), phi(0.3)])
@pytest.mark.parametrize("n", [2, 3])
def test_nesting(scale, n):
    for a in cantor.all_addresses(n, 2):
        child, parent = cantor.center(scale, a), cantor.center(scale, a.parent)
        reach = np.max(np.abs(cantor.torus_delta(child, parent))) + cantor.length(scale, n) / 2
        assert reach <= cantor.length(scale, n - 1) / 2 + 1e-15


@given(addresses(10, 2), st.integers(1, 10))
def test_limit_point_in_every_prefix_cube(a, n):
    n = min(n, a.n)
    for scale in (THETA, phi(NU)):
        x = cantor.limit_point(scale, a)
        assert cantor.in_closed_cube(x, cantor.center(scale, a.truncate(n)), cantor.length(scale, n))


def test_distinct_addresses_distinct_limit_points():
    pts = np.array([cantor.limit_point(phi(NU), a) for a in cantor.all_addresses(3, 2)])
    assert cantor.pairwise_min_separation(pts) > 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dyadic_children_tile_parent(n):
    for a in cantor.all_addresses(n, 2):
        kids = [Address(a.signs + (s,)) for s in itertools.product((-1, 1), repeat=2)]
        c = np.array([cantor.center(THETA, k) for k in kids])
        lo = c - cantor.length(THETA, n + 1) / 2
        parent_lo = cantor.center(THETA, a) - cantor.length(THETA, n) / 2
        # the four children's lower corners form the 2x2 grid inside the parent
        offs = np.round((lo - parent_lo) / cantor.length(THETA, n + 1)).astype(int)
        assert sorted(map(tuple, offs)) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_theta_margin_value():
    assert cantor.theta_margin(NU) == pytest.approx(0.0852241038134286357577813690583, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_moving_cube_inclusion(n):
    for a in cantor.all_addresses(n, 2):
        for s in np.linspace(0, 1, 11):
            assert cantor.moving_cube_clearance(NU, a, s) > 0


def test_inclusion_breaks_only_for_large_theta():
    a = Address.parse("++")
    th = cantor.theta_margin(NU)
    assert cantor.moving_cube_clearance(NU, a, 0.0, 2 * th) > 0
    assert cantor.moving_cube_clearance(NU, a, 0.0, 10 * th) < 0


@given(st.floats(0.05, 1.0), st.integers(1, 4), st.floats(0, 1))
def test_inclusion_property(nu, n, s):
    a = Address(((1, -1),) * n)
    assert cantor.moving_cube_clearance(nu, a, s) > 0


# ----------------------------------------------------------------------------
# decoding and membership


def brute_decode(x, n):
    """Search every dyadic cell for the one containing x (upper cell on ties)."""
    best = None
    for a in cantor.all_addresses(n, len(x)):
        c = cantor.center(THETA, a)
        half = cantor.length(THETA, n) / 2
        rel = (x - c + 0.5) % 1.0 - 0.5
        if np.all((rel >= -half) & (rel < half)):
            best = a
    return best


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=2, max_size=2), st.integers(1, 3))
def test_decode_matches_brute_force(x, n):
    x = np.array(x)
    assert cantor.decode_address(x, n) == brute_decode(x, n)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_decode_roundtrip_on_centers(n):
    arr = cantor.address_array(n, 2)
    back = cantor.decode_signs(cantor.centers(THETA, arr.astype(float)), n)
    assert np.array_equal(back, arr)


def test_decode_tie_goes_up():
    assert cantor.decode_address(np.array([0.5, 0.25]), 2) == Address.parse("+-,-+")


@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=3, max_size=3), st.integers(0, 8))
def test_dyadic_cell_contains_point(x, n):
    x = np.array(x)
    assert cantor.in_closed_cube(x, cantor.dyadic_cell_center(x, n), 2.0 ** -n, atol=0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_generation_membership(n):
    arr = cantor.address_array(n, 2)
    inside, signs = cantor.generation_signs(cantor.centers(phi(NU), arr.astype(float)), NU, n)
    assert inside.all() and np.array_equal(signs, arr)
    # membership of arbitrary points agrees with a brute-force scan over all cubes
    x = np.random.default_rng(n).uniform(size=(400, 2))
    side = cantor.length(phi(NU), n)
    cs = cantor.centers(phi(NU), arr.astype(float))
    brute = np.array([any(cantor.in_closed_cube(p, c, side) for c in cs) for p in x])
    assert np.array_equal(cantor.in_generation_set(x, NU, n), brute)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_membership_volume_by_monte_carlo(n):
    rng = np.random.default_rng(n)
    x = rng.uniform(size=(200_000, 2))
    frac = cantor.in_generation_set(x, NU, n).mean()
    vol = cantor.cantor_volume(NU, 2, n)
    assert frac == pytest.approx(vol, abs=4 * math.sqrt(vol / len(x)))


@pytest.mark.parametrize("nu,d,n", [(0.75, 2, 6), (0.5, 3, 2), (1.0, 2, 3)])
def test_cantor_volume(nu, d, n):
    assert cantor.cantor_volume(nu, d, n) == pytest.approx(2 ** (n * d) * cantor.length(phi(nu), n) ** d)


@pytest.mark.parametrize("n", range(1, 11))
def test_box_dimension(n):
    assert abs(cantor.box_dimension(NU, 2, n) - 8 / 7) <= 1e-12


def test_box_dimension_rejects_zero():
    with pytest.raises(ValueError):
        cantor.box_dimension(NU, 2, 0)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_torus_delta_range(a, b):
    d = cantor.torus_delta(a, b)
    assert -0.5 <= d < 0.5
    assert math.isclose((b + d - a) % 1.0, 0.0, abs_tol=1e-9) or math.isclose((b + d - a) % 1.0, 1.0, abs_tol=1e-9)


def test_corners():
    cs = cantor.corners(np.array([0.5, 0.5]), 0.2)
    assert cs.shape == (4, 2)
    assert np.allclose(sorted(map(tuple, cs)), [(0.4, 0.4), (0.4, 0.6), (0.6, 0.4), (0.6, 0.6)])
