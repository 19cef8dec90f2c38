import math

import numpy as np
import pytest

from polartraj.geometry import (
    PolarPoint,
    RelativePolar,
    cart_to_polar,
    polar_feature,
    polar_to_cart,
    relative_polar,
    rotate_xy,
    wrap_angle,
)


def brute_wrap(a):
    # independent oracle: subtract/add 2*pi until inside (-pi, pi]
    while a > math.pi:
        a -= 2 * math.pi
    while a <= -math.pi:
        a += 2 * math.pi
    return a


class TestWrapAngle:
    def test_three_half_pi(self):
        assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2, abs=1e-15)

    def test_boundary_maps_to_plus_pi(self):
        assert wrap_angle(-math.pi) == math.pi
        assert wrap_angle(math.pi) == math.pi
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)

    def test_matches_iterative_subtraction(self):
        assert abs(wrap_angle(7.5 * math.pi) - brute_wrap(7.5 * math.pi)) < 1e-12
        rng = np.random.default_rng(7)
        for a in rng.uniform(-50, 50, size=200):
            assert abs(wrap_angle(a) - brute_wrap(a)) < 1e-12

    def test_idempotent_and_mod_2pi(self):
        rng = np.random.default_rng(11)
        a = rng.uniform(-100, 100, size=1000)
        w = wrap_angle(a)
        assert np.all(w > -math.pi) and np.all(w <= math.pi)
        assert np.allclose(wrap_angle(w), w, atol=0.0)
        # congruence mod 2*pi
        k = np.round((a - w) / (2 * math.pi))
        assert np.allclose(w + 2 * math.pi * k, a, atol=1e-9)


class TestConversions:
    def test_axes(self):
        assert cart_to_polar(1.0, 0.0) == (1.0, 0.0)
        r, th = cart_to_polar(0.0, 2.0)
        assert (r, th) == (2.0, pytest.approx(math.pi / 2))
        r, th = cart_to_polar(-3.0, 0.0)
        assert (r, th) == (3.0, math.pi)

    def test_origin_canonical(self):
        assert cart_to_polar(0.0, 0.0) == (0.0, 0.0)
        assert cart_to_polar(1e-12, -1e-12) == (0.0, 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            cart_to_polar(np.nan, 0.0)
        with pytest.raises(ValueError):
            cart_to_polar(0.0, np.inf)

    def test_polar_to_cart_trivial(self):
        assert polar_to_cart(1.0, 0.0) == (1.0, 0.0)
        assert polar_to_cart(0.0, 0.0) == (0.0, 0.0)

    def test_round_trip_cart_polar_cart(self):
        rng = np.random.default_rng(3)
        r = 10.0 ** rng.uniform(-6, 3, size=100_000)
        th = rng.uniform(-math.pi, math.pi, size=100_000)
        x, y = polar_to_cart(r, th)
        r2, th2 = cart_to_polar(x, y)
        x2, y2 = polar_to_cart(r2, th2)
        err = np.hypot(x2 - x, y2 - y)
        assert err.max() < 1e-9

    def test_round_trip_polar_cart_polar(self):
        rng = np.random.default_rng(4)
        r = rng.uniform(1e-3, 1e3, size=10_000)
        th = rng.uniform(-math.pi + 1e-9, math.pi, size=10_000)
        x, y = polar_to_cart(r, th)
        r2, th2 = cart_to_polar(x, y)
        assert np.abs(r2 - r).max() < 1e-9 * np.maximum(r, 1.0).max()
        assert np.abs(wrap_angle(th2 - th)).max() < 1e-12


class TestRelativePolar:
    def test_identity_pair(self):
        assert relative_polar(1.0, 0.5, 1.0, 0.5) == (0.0, 1.0, 0.0)

    def test_pure_rotation(self):
        dr, c, s = relative_polar(1.0, 0.0, 1.0, math.pi / 2)
        assert dr == 0.0
        assert c == pytest.approx(0.0, abs=1e-15)
        assert s == pytest.approx(1.0)

    def test_antisymmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            rq, rk = rng.uniform(0, 10, size=2)
            tq, tk = rng.uniform(-3, 3, size=2)
            d1, c1, s1 = relative_polar(rq, tq, rk, tk)
            d2, c2, s2 = relative_polar(rk, tk, rq, tq)
            assert d1 == pytest.approx(-d2, abs=1e-12)
            assert c1 == pytest.approx(c2, abs=1e-12)
            assert s1 == pytest.approx(-s2, abs=1e-12)

    def test_global_rotation_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            rq, rk = rng.uniform(0, 10, size=2)
            tq, tk = rng.uniform(-math.pi, math.pi, size=2)
            phi = rng.uniform(-10, 10)
            base = relative_polar(rq, tq, rk, tk)
            rot = relative_polar(rq, wrap_angle(tq + phi), rk, wrap_angle(tk + phi))
            assert np.allclose(base, rot, atol=1e-12)


class TestPolarPoint:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            PolarPoint(-1.0, 0.0)
        with pytest.raises(ValueError):
            PolarPoint(1.0, 4.0)
        with pytest.raises(ValueError):
            PolarPoint(0.0, 1.0)

    def test_of_canonicalizes(self):
        p = PolarPoint.of(1e-12, 2.0)
        assert (p.r, p.theta) == (0.0, 0.0)
        q = PolarPoint.of(2.0, 5.0)
        assert -math.pi < q.theta <= math.pi

    def test_round_trip(self):
        p = PolarPoint.from_cartesian(3.0, 4.0)
        assert p.r == pytest.approx(5.0)
        x, y = p.to_cartesian()
        assert (x, y) == (pytest.approx(3.0), pytest.approx(4.0))

    def test_feature_unit_norm(self):
        p = PolarPoint.of(2.0, 1.3)
        r, c, s = p.feature()
        assert c * c + s * s == pytest.approx(1.0, abs=1e-12)

    def test_relative_between(self):
        q = PolarPoint.of(1.0, 0.0)
        k = PolarPoint.of(1.0, math.pi / 2)
        rel = RelativePolar.between(q, k)
        assert rel.delta_r == 0.0
        assert rel.sin_dtheta == pytest.approx(1.0)


def test_polar_feature_stacking():
    out = polar_feature([1.0, 2.0], [0.0, math.pi / 2])
    assert out.shape == (2, 3)
    assert np.allclose(out[0], [1.0, 1.0, 0.0])
    assert np.allclose(out[1], [2.0, 0.0, 1.0], atol=1e-15)


def test_rotate_xy():
    x, y = rotate_xy(1.0, 0.0, math.pi / 2)
    assert x == pytest.approx(0.0, abs=1e-15)
    assert y == pytest.approx(1.0)
