import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogopt.cog import SingularGradientError, centroid_seed, cog_cost, gradient, weiszfeld
from cogopt.geo import GeoPoint
from cogopt.model import Customer


def cust(lat, lon, w=1.0):
    return Customer(f"c{lat}_{lon}_{w}", GeoPoint(lat, lon), w)


def triangle(ref=0.0):
    # equilateral triangle in raw degrees (ref_lat = 0 keeps the plane isotropic)
    r = 1.0
    return [cust(r * math.sin(a), r * math.cos(a)) for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3,
                                                               math.pi / 2 + 4 * math.pi / 3)]


def test_centroid_seed_examples():
    assert centroid_seed([cust(10, 20)]) == GeoPoint(10, 20)
    assert centroid_seed([cust(0, 0), cust(0, 2)]) == GeoPoint(0, 1)
    assert centroid_seed([cust(0, 0, 1), cust(0, 4, 3)]) == GeoPoint(0, 3)
    with pytest.raises(ValueError):
        centroid_seed([cust(0, 0, 0.0)])


def test_gradient_examples():
    g = gradient(GeoPoint(0, 1), [cust(0, 0), cust(0, 2)], ref_lat=0.0)
    assert g == pytest.approx((0.0, 0.0), abs=1e-15)
    gx, gy = gradient(GeoPoint(0, 3), [cust(0, 0)], ref_lat=0.0)
    assert gx > 0 and gy == 0
    with pytest.raises(SingularGradientError):
        gradient(GeoPoint(0, 0), [cust(0, 0), cust(1, 1)])


def fd_gradient(point, cs, ref, h=1e-6):
    k = math.cos(math.radians(ref))
    def f(dx, dy):
        return cog_cost(GeoPoint(point.lat + dy, point.lon + dx / k), cs, ref_lat=ref)
    return ((f(h, 0) - f(-h, 0)) / (2 * h), (f(0, h) - f(0, -h)) / (2 * h))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(17)
    done = 0
    while done < 100:
        n = int(rng.integers(2, 12))
        cs = [cust(float(a), float(o), float(w)) for a, o, w in
              zip(rng.uniform(35, 45, n), rng.uniform(-85, -70, n), rng.uniform(0.5, 50, n))]
        p = GeoPoint(float(rng.uniform(35, 45)), float(rng.uniform(-85, -70)))
        if min(math.hypot(p.lat - c.point.lat, p.lon - c.point.lon) for c in cs) < 0.05:
            continue
        ref = float(rng.uniform(30, 50))
        g = np.array(gradient(p, cs, ref_lat=ref))
        fd = np.array(fd_gradient(p, cs, ref))
        assert np.linalg.norm(g - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))
        done += 1


def test_single_customer():
    res = weiszfeld([cust(41.25, -77.5, 7)])
    assert res.point == GeoPoint(41.25, -77.5)
    assert res.objective == 0.0


def test_equilateral_triangle_converges_to_centroid():
    res = weiszfeld(triangle(), tol=1e-10, ref_lat=0.0)
    assert res.converged
    assert abs(res.point.lat) <= 1e-6 and abs(res.point.lon) <= 1e-6


def test_majority_point_is_optimal():
    cs = [cust(40, -78, 1), cust(41, -76, 1), cust(39, -77, 3)]
    res = weiszfeld(cs)
    assert res.point == GeoPoint(39, -77)
    assert res.at_demand_point
    h = res.history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))


def test_iteration_cap_warns():
    cs = [cust(40, -78, 1), cust(41, -76, 2), cust(39, -77, 1.5), cust(42, -79, 1)]
    with pytest.warns(RuntimeWarning):
        res = weiszfeld(cs, max_iters=2, tol=1e-15)
    assert not res.converged


def test_rejects_no_demand():
    with pytest.raises(ValueError):
        weiszfeld([cust(40, -78, 0.0)])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 25))
def test_monotone_and_never_worse_than_seed(seed, n):
    rng = np.random.default_rng(seed)
    cs = [cust(float(a), float(o), float(w)) for a, o, w in
          zip(rng.uniform(30, 45, n), rng.uniform(-90, -70, n), rng.integers(1, 100, n))]
    res = weiszfeld(cs)
    h = res.history
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(h, h[1:]))
    assert res.objective <= cog_cost(centroid_seed(cs), cs) * (1 + 1e-12)
    assert res.objective_miles == pytest.approx(res.objective * 69.17)
