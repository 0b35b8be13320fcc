import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isolab.manifold import (
    CapSpec,
    ConformalGrid,
    build_plane_with_caps,
    bump,
    cell_volume,
    chart_from_window,
    curvature_field,
    distances_from,
    dumps_grid,
    flat_grid,
    gauss_curvature,
    geodesic_distance,
    loads_grid,
    metric_ball,
    phi_window,
    recentered_metric_difference,
    verify_bounded_geometry,
)
from isolab.sequences import canonical_cap_grid, identical_caps_grid

from oracles import dijkstra_vertices


def cap_grid(amp=1.0, radius=4.0, size=20):
    c = size // 2
    return build_plane_with_caps(size, size, 1.0, "open", CapSpec.uniform([(c, c)], amp, radius))


# -- construction ----------------------------------------------------------

def test_flat_unit_cell_volume():
    g = flat_grid(4, 4, h=0.5)
    assert cell_volume(g, (1, 2)) == 0.25
    assert g.total_volume == 4.0


def test_no_caps_is_flat():
    g = build_plane_with_caps(6, 5)
    assert g.is_flat and np.all(g.phi == 1.0)


def test_zero_amplitude_cap_is_flat():
    g = build_plane_with_caps(12, 12, caps=CapSpec.uniform([(6, 6)], 0.0, 3.0))
    assert g.is_flat


@pytest.mark.parametrize("bad", [dict(h=0.0), dict(h=-1.0)])
def test_nonpositive_spacing_rejected(bad):
    with pytest.raises(ValueError, match="h"):
        build_plane_with_caps(8, 8, **bad)


def test_nonpositive_phi_rejected():
    phi = np.ones((5, 5))
    phi[2, 2] = 0.0
    with pytest.raises(ValueError, match="positive"):
        ConformalGrid(4, 4, 1.0, phi)


def test_overlapping_caps_rejected():
    with pytest.raises(ValueError, match="overlapping"):
        build_plane_with_caps(30, 20, caps=CapSpec.uniform([(10, 10), (10, 15)], 1.0, 3.0))


def test_cap_leaving_grid_rejected():
    with pytest.raises(ValueError, match="leaves"):
        build_plane_with_caps(10, 10, caps=CapSpec.uniform([(1, 5)], 1.0, 3.0))


def test_periodic_phi_must_wrap():
    phi = np.ones((5, 5))
    phi[0, 2] = 2.0
    with pytest.raises(ValueError, match="wrap"):
        ConformalGrid(4, 4, 1.0, phi, "periodic")


def test_cell_outside_grid():
    with pytest.raises(IndexError):
        cell_volume(flat_grid(3, 3), (3, 0))


def test_three_caps_volume_excess_adds_up():
    one, _ = identical_caps_grid(1, spacing=16, lead=20)
    three, _ = identical_caps_grid(3, spacing=16, lead=20)
    excess_one = one.total_volume - one.width * one.height
    excess_three = three.total_volume - three.width * three.height
    assert excess_one > 0
    assert excess_three == pytest.approx(3 * excess_one, rel=1e-12)


def test_cap_centre_cell_hand_value():
    g = cap_grid(amp=1.0, radius=4.0)
    # corners of cell (10, 10): centre vertex plus two at distance 1, one at sqrt 2
    corners = [1 + bump(0.0), 1 + bump(0.25), 1 + bump(0.25), 1 + bump(math.sqrt(2) / 4)]
    assert cell_volume(g, (10, 10)) == pytest.approx((sum(corners) / 4) ** 2, rel=1e-14)


# -- distances ---------------------------------------------------------------

def test_flat_distance_octile():
    g = flat_grid(10, 10)
    assert geodesic_distance(g, (0, 0), (3, 3)) == pytest.approx(3 * math.sqrt(2))
    assert geodesic_distance(g, (0, 0), (0, 7)) == pytest.approx(7.0)
    assert geodesic_distance(g, (2, 1), (5, 8)) == pytest.approx(4 + 3 * math.sqrt(2))


def test_periodic_distance_wraps():
    g = flat_grid(10, 10, boundary_mode="periodic")
    assert geodesic_distance(g, (0, 0), (0, 9)) == pytest.approx(1.0)


def test_cap_lengthens_path_across_it():
    flat = flat_grid(20, 20)
    g = cap_grid()
    d_flat = geodesic_distance(flat, (10, 4), (10, 16))
    d_cap = geodesic_distance(g, (10, 4), (10, 16))
    assert d_cap > d_flat


@pytest.mark.parametrize("src", [(10, 10), (3, 7), (0, 0)])
def test_cap_distances_match_heap_dijkstra(src):
    g = cap_grid(amp=2.0, radius=5.0)
    np.testing.assert_allclose(distances_from(g, src), dijkstra_vertices(g, src), rtol=1e-12)


def test_flat_ball_radius_three_count():
    # offsets (a, b) with max - min + sqrt2 * min <= 3: frozen from the oracle
    g = flat_grid(12, 12)
    ball = metric_ball(g, (6, 6), 3.0)
    d = dijkstra_vertices(g, (6, 6))[:12, :12]
    assert np.array_equal(ball, d <= 3.0 + 1e-9)
    assert int(ball.sum()) == 29


def test_cap_ball_matches_enumeration():
    g = cap_grid(amp=1.0, radius=4.0)
    d = dijkstra_vertices(g, (10, 10))[:20, :20]
    for R in (1.0, 2.5, 4.0):
        assert np.array_equal(metric_ball(g, (10, 10), R), d <= R + 1e-9)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        metric_ball(flat_grid(4, 4), (1, 1), -1.0)


# -- curvature -----------------------------------------------------------------

def test_flat_curvature_zero():
    assert np.all(curvature_field(flat_grid(6, 6)) == 0.0)


def test_round_sphere_chart_curvature_near_one():
    h = 0.02
    n = 100
    x = (np.arange(n + 1) - n / 2) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    phi = 2.0 / (1.0 + X**2 + Y**2)
    g = ConformalGrid(n, n, h, phi)
    K = curvature_field(g)
    assert abs(K[n // 2, n // 2] - 1.0) < 1e-3
    assert np.max(np.abs(K[10:-10, 10:-10] - 1.0)) < 1e-3


def test_cap_curvature_min_matches_direct_formula():
    g = cap_grid(amp=1.0, radius=4.0)
    L = np.log(g.phi)
    lap = L[2:, 1:-1] + L[:-2, 1:-1] + L[1:-1, 2:] + L[1:-1, :-2] - 4 * L[1:-1, 1:-1]
    K = -lap / g.phi[1:-1, 1:-1] ** 2
    np.testing.assert_allclose(curvature_field(g)[1:-1, 1:-1], K, rtol=1e-12, atol=1e-15)
    assert K.min() < 0 < K.max()


def test_boundary_curvature_warns():
    with pytest.warns(RuntimeWarning, match="boundary"):
        gauss_curvature(flat_grid(4, 4), (0, 2))


def test_interior_curvature_quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert gauss_curvature(flat_grid(4, 4), (2, 2)) == 0.0


def test_bounded_geometry_flat():
    rep = verify_bounded_geometry(flat_grid(12, 12), k=0.0, v0=2.0)
    assert rep.passes == (True, True)
    assert rep.min_curvature == 0.0
    # unit octile ball covers the anchor and its four axis neighbours
    assert rep.min_unit_ball_volume == 5.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-10.0, 0.0), st.floats(0.0, 5.0), st.sampled_from(["open", "periodic"]))
def test_flat_geometry_passes_below_disk_area(k, v0, mode):
    assert verify_bounded_geometry(flat_grid(10, 10, boundary_mode=mode), k, v0).passes == (True, True)


def test_bounded_geometry_cap_curvature_below_zero_fails_k0():
    rep = verify_bounded_geometry(cap_grid(), k=0.0, v0=1.0)
    assert rep.passes == (False, True)


# -- recentring ----------------------------------------------------------------

def test_identical_caps_windows_bit_equal():
    g, centers = identical_caps_grid(3)
    canon, c = canonical_cap_grid(32)
    for p in centers:
        assert recentered_metric_difference(g, p, canon, c, 8.0) == 0.0


def test_window_leaving_grid():
    with pytest.raises(ValueError, match="exceeds"):
        phi_window(flat_grid(6, 6), (1, 1), 3.0)


def test_chart_from_window_centre():
    canon, c = canonical_cap_grid(32)
    chart = chart_from_window(canon, c, 8.0)
    assert chart.shape == (16, 16)
    assert chart.phi[8, 8] == canon.phi[c]


# -- serialization -------------------------------------------------------------

def test_grid_round_trip():
    g = cap_grid(amp=0.7, radius=3.3)
    back = loads_grid(dumps_grid(g))
    assert np.array_equal(back.phi, g.phi) and back.id == g.id
    assert back.boundary_mode == g.boundary_mode and back.h == g.h


# -- properties ----------------------------------------------------------------

cap_grids = st.builds(
    lambda amp, rho: cap_grid(amp=amp, radius=rho, size=16),
    st.floats(0.0, 3.0),
    st.floats(1.0, 6.0),
)
vertices = st.tuples(st.integers(0, 16), st.integers(0, 16))


@settings(max_examples=30, deadline=None)
@given(cap_grids, vertices, vertices, vertices)
def test_distance_is_a_metric(g, p, q, r):
    dp = distances_from(g, p)
    dq = distances_from(g, q)
    assert dp[p] == 0.0
    assert dp[q] == pytest.approx(dq[p], rel=1e-12)
    assert dp[r] <= dp[q] + dq[r] + 1e-9
    if p != q:
        assert dp[q] > 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), vertices, vertices)
def test_distance_scales_with_h_and_phi(h, c, p, q):
    g = ConformalGrid(16, 16, h, np.full((17, 17), c))
    base = geodesic_distance(flat_grid(16, 16), p, q)
    assert geodesic_distance(g, p, q) == pytest.approx(h * c * base, rel=1e-12, abs=1e-12)
    assert g.cell_volumes[0, 0] == pytest.approx((h * c) ** 2, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(cap_grids, vertices, st.floats(0.5, 5.0), st.floats(0.0, 3.0))
def test_balls_are_nested(g, p, R, extra):
    small = metric_ball(g, p, R)
    big = metric_ball(g, p, R + extra)
    assert not (small & ~big).any()
