import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from intrepid.errors import DimensionMismatch, SingularJacobian, ZeroRadius
from intrepid.geometry import (
    TWO_PI,
    PolarVector,
    cartesian_to_polar,
    log_volume_jacobian,
    log_volume_jacobian_array,
    polar_to_cartesian,
    to_cartesian,
    to_hyperspherical,
)


class TestToHyperspherical:
    def test_axis_point(self):
        v = to_hyperspherical([1.0, 0.0], [0.0, 0.0])
        assert v.r == pytest.approx(1.0)
        assert v.angles == pytest.approx([0.0])

    def test_vertical_point(self):
        v = to_hyperspherical([0.0, 2.0], [0.0, 0.0])
        assert v.r == pytest.approx(2.0)
        assert v.angles == pytest.approx([np.pi / 2])

    def test_three_dimensional_pole(self):
        v = to_hyperspherical([0.0, 0.0, 1.0], np.zeros(3))
        assert v.r == pytest.approx(1.0)
        assert v.angles == pytest.approx([np.pi / 2, np.pi / 2])

    def test_negative_azimuth_wrapped(self):
        v = to_hyperspherical([1.0, -1.0], [0.0, 0.0])
        assert v.angles[0] == pytest.approx(7 * np.pi / 4)

    def test_anchor_offset(self):
        v = to_hyperspherical([4.0, 4.0], [3.0, 4.0])
        assert v.r == pytest.approx(1.0)
        assert v.angles[0] == pytest.approx(0.0)

    def test_zero_radius(self):
        with pytest.raises(ZeroRadius):
            to_hyperspherical([1.0, 2.0], [1.0, 2.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            to_hyperspherical([1.0, 2.0, 3.0], [0.0, 0.0])

    def test_one_dimensional_rejected(self):
        with pytest.raises(DimensionMismatch):
            to_hyperspherical([1.0], [0.0])

    def test_seam_never_returns_two_pi(self):
        _, th = cartesian_to_polar(np.array([[1.0, -1e-300]]), np.zeros(2))
        assert 0.0 <= th[0, 0] < TWO_PI


class TestToCartesian:
    def test_half_turn(self):
        x = to_cartesian(PolarVector(1.0, [np.pi]), [0.0, 0.0])
        assert x == pytest.approx([-1.0, 0.0], abs=1e-15)

    def test_zero_radius_is_anchor(self):
        x = to_cartesian(PolarVector(0.0, [1.234]), [3.0, 4.0])
        assert x == pytest.approx([3.0, 4.0])

    def test_three_dimensional(self):
        x = to_cartesian(PolarVector(2.0, [np.pi / 2, 0.0]), np.zeros(3))
        assert x == pytest.approx([0.0, 2.0, 0.0], abs=1e-15)

    def test_invalid_polar_vector(self):
        with pytest.raises(ValueError):
            PolarVector(-1.0, [0.0])
        with pytest.raises(ValueError):
            PolarVector(1.0, [4.0, 0.0])
        with pytest.raises(ValueError):
            PolarVector(1.0, [7.0])


class TestJacobian:
    def test_two_dimensional(self):
        assert log_volume_jacobian(PolarVector(2.0, [0.3])) == pytest.approx(np.log(2.0))

    def test_unit_equator(self):
        assert log_volume_jacobian(PolarVector(1.0, [np.pi / 2, 1.0])) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        assert log_volume_jacobian(PolarVector(2.0, [np.pi / 6, 2.0])) == pytest.approx(np.log(2.0))

    def test_singular(self):
        with pytest.raises(SingularJacobian):
            log_volume_jacobian(PolarVector(1.0, [0.0, 1.0]))
        with pytest.raises(SingularJacobian):
            log_volume_jacobian(PolarVector(0.0, [1.0]))

    @pytest.mark.parametrize("d", [2, 3])
    def test_volume_of_polar_box(self, d):
        # integrate the volume element over a polar box and compare with a
        # Monte Carlo estimate of the image region's Lebesgue volume
        rng = np.random.default_rng(0)
        r_lo, r_hi = 0.5, 1.5
        a_lo = np.full(d - 1, 0.4)
        a_hi = np.full(d - 1, 1.6)
        k = 60
        rs = r_lo + (np.arange(k) + 0.5) * (r_hi - r_lo) / k
        grids = [a + (np.arange(k) + 0.5) * (b - a) / k for a, b in zip(a_lo, a_hi)]
        mesh = np.meshgrid(rs, *grids, indexing="ij")
        vals = np.exp(log_volume_jacobian_array(mesh[0], np.stack(mesh[1:], axis=-1)))
        cell = (r_hi - r_lo) / k * np.prod((a_hi - a_lo) / k)
        quad = vals.sum() * cell

        n = 400_000
        pts = rng.uniform(-r_hi, r_hi, (n, d))
        r, th = cartesian_to_polar(pts, np.zeros(d))
        inside = (r >= r_lo) & (r <= r_hi) & np.all((th >= a_lo) & (th <= a_hi), axis=1)
        mc = inside.mean() * (2 * r_hi) ** d
        assert quad == pytest.approx(mc, rel=0.02)
        # the midpoint quadrature itself agrees with the closed form
        if d == 2:
            exact = 0.5 * (r_hi ** 2 - r_lo ** 2) * (a_hi[0] - a_lo[0])
        else:
            exact = (r_hi ** 3 - r_lo ** 3) / 3 * (np.cos(a_lo[0]) - np.cos(a_hi[0])) * (a_hi[1] - a_lo[1])
        assert quad == pytest.approx(exact, rel=0.005)


class TestRoundTrip:
    @pytest.mark.parametrize("d", [2, 3, 10, 50])
    def test_batch(self, d):
        rng = np.random.default_rng(d)
        x = rng.normal(size=(10_000, d)) * rng.uniform(0.1, 10, size=(10_000, 1))
        a = rng.normal(size=d)
        r, th = cartesian_to_polar(x, a)
        assert np.max(np.abs(polar_to_cartesian(r, th, a) - x)) < 1e-10

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-1e3, 1e3)))
    def test_property(self, x):
        if np.linalg.norm(x) < 1e-6:
            return
        v = to_hyperspherical(x, np.zeros_like(x))
        assert np.max(np.abs(to_cartesian(v, np.zeros_like(x)) - x)) < 1e-10 * max(1.0, np.max(np.abs(x)))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-50, 50)))
    def test_ranges(self, x):
        r, th = cartesian_to_polar(x, np.zeros_like(x))
        assert r >= 0
        assert np.all(th[:-1] >= 0) and np.all(th[:-1] <= np.pi)
        assert 0 <= th[-1] < TWO_PI
