"""Gauge/support contracts of the body representations."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from convexlab.bodies import (
    Cube,
    DirectionSampler,
    Ellipsoid,
    HPolytope,
    LinearImage,
    LqBall,
    RadialStar,
    Scaled,
    body_from_json,
    body_to_json,
    cylinder,
    dual_gauge,
    gauge,
    mean_width,
    support,
    volume_radius,
    volume_radius_mc,
)
from convexlab.errors import (
    BudgetError,
    ConstructionError,
    DomainError,
    UnsupportedOperationError,
    UsageError,
)
from convexlab.util import philox, unit_vectors


def random_bodies(n, gen):
    a = gen.standard_normal((n, n)) + 3 * np.eye(n)
    yield Ellipsoid(a)
    yield Cube(float(gen.uniform(0.5, 2.0)), n)
    yield LqBall(float(gen.uniform(1.0, 4.0)), float(gen.uniform(0.5, 2.0)), n)
    normals = gen.standard_normal((3 * n, n))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    yield HPolytope(normals, gen.uniform(0.5, 2.0, 3 * n))


class TestGaugeExamples:
    def test_identity_ellipsoid(self):
        assert gauge(Ellipsoid.ball(3), [1, 0, 0]) == pytest.approx(1.0)

    def test_cube_max_coordinate(self):
        assert gauge(Cube(1.0, 2), [3, -1]) == pytest.approx(3.0)

    def test_l1_norm(self):
        assert gauge(LqBall(1, 1, 2), [0.3, 0.4]) == pytest.approx(0.7)

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            gauge(Cube(1.0, 3), [1, 2])

    def test_singular_ellipsoid_rejected(self):
        with pytest.raises(ConstructionError):
            Ellipsoid(np.array([[1.0, 0.0], [1.0, 0.0]]))


class TestSupportExamples:
    def test_ball(self):
        assert support(Ellipsoid.ball(2), [0, 1]) == pytest.approx(1.0)

    def test_cube_is_l1(self):
        assert support(Cube(1.0, 3), [1, 1, 1]) == pytest.approx(3.0)

    def test_semi_axis(self):
        assert support(Ellipsoid(np.diag([2.0, 1.0])), [1, 0]) == pytest.approx(2.0)

    def test_star_body_without_certificate(self):
        star = RadialStar(2, lambda u: 1.0 + 0.3 * u[:, 0] ** 2)
        with pytest.raises(UnsupportedOperationError):
            support(star, [1, 0])

    def test_hpolytope_support_matches_cube(self):
        # the cube as an H-polytope; LP support must agree with the l1 formula
        poly = HPolytope(np.eye(3), np.ones(3))
        theta = np.array([0.3, -1.2, 0.5])
        assert support(poly, theta) == pytest.approx(np.abs(theta).sum(), rel=1e-8)


class TestDualGauge:
    def test_cube(self):
        assert dual_gauge(Cube(1.0, 2), [1, 1]) == pytest.approx(2.0)

    def test_self_dual_ball(self):
        x = np.array([0.3, -0.2, 0.5, 1.0])
        assert dual_gauge(Ellipsoid.ball(4), x) == pytest.approx(np.linalg.norm(x))

    def test_linf_l1_duality(self):
        assert dual_gauge(LqBall(math.inf, 1, 3), [1, -2, 3]) == pytest.approx(6.0)


class TestVolumeRadius:
    def test_unit_ball(self):
        assert volume_radius(Ellipsoid.ball(5)) == pytest.approx(1.0)

    def test_determinant_root(self):
        assert volume_radius(Ellipsoid(np.diag([4.0, 1.0]))) == pytest.approx(2.0)

    def test_cross_polytope_oracle(self):
        # oracle: |B_1^2| = 2 exactly, so vrad = (2/pi)^(1/2); the production
        # path goes through the gamma-function volume formula instead
        expected = math.sqrt(2.0 / math.pi)
        assert volume_radius(LqBall(1, 1, 2)) == pytest.approx(expected, rel=1e-12)

    def test_high_dimension_no_overflow(self):
        v = volume_radius(Cube(1.0, 400))
        assert math.isfinite(v) and v > 0

    def test_mc_agrees_with_exact(self):
        body = Ellipsoid(np.diag([1.5, 0.7, 1.1]))
        est = volume_radius_mc(body, 200_000, seed=4)
        assert abs(est.value - volume_radius(body)) <= 3 * est.stderr + 1e-3

    def test_mc_dimension_cap(self):
        with pytest.raises(BudgetError):
            volume_radius_mc(Cube(1.0, 9), 1000)


class TestMeanWidth:
    def test_unit_ball(self):
        est = mean_width(Ellipsoid.ball(8), 100_000, seed=1)
        assert abs(est.value - 1.0) <= 3 * est.stderr

    def test_square_oracle(self):
        # oracle: quadrature of the square's support |cos| + |sin| on the circle
        oracle, _ = quad(lambda t: abs(math.cos(t)) + abs(math.sin(t)),
                         0, 2 * math.pi)
        oracle /= 2 * math.pi
        assert oracle == pytest.approx(4.0 / math.pi, rel=1e-9)
        est = mean_width(Cube(1.0, 2), 100_000, seed=2)
        assert abs(est.value - oracle) <= 3 * est.stderr

    def test_scaling_homogeneity(self):
        est = mean_width(Ellipsoid(np.diag([3.0, 3.0])), 100_000, seed=3)
        assert abs(est.value - 3.0) <= 3 * est.stderr

    def test_sample_floor(self):
        with pytest.raises(UsageError):
            mean_width(Cube(1.0, 2), 50)


class TestInvariants:
    def test_gauge_homogeneity_bulk(self):
        # 1000 random (body, x, lambda) triples across the tagged variants
        gen = philox(10)
        checked = 0
        while checked < 1000:
            n = int(gen.integers(2, 6))
            for body in random_bodies(n, gen):
                x = gen.standard_normal(n)
                lam = float(gen.uniform(0.1, 10.0))
                g1 = body.gauge(lam * x)
                g2 = lam * body.gauge(x)
                assert abs(g1 - g2) <= 1e-9 * max(g1, 1e-12)
                checked += 1

    def test_gauge_symmetry_exact(self):
        gen = philox(11)
        for n in (2, 3, 5):
            for body in random_bodies(n, gen):
                x = gen.standard_normal((50, n))
                assert np.array_equal(body.gauge(x), body.gauge(-x))

    def test_ellipsoid_gauge_support_duality(self):
        # gauge under A equals support under inverse-transpose, 1000 instances
        gen = philox(12)
        for _ in range(1000):
            n = int(gen.integers(1, 17))
            a = gen.standard_normal((n, n)) + 3 * np.eye(n)
            x = gen.standard_normal(n)
            g = Ellipsoid(a).gauge(x)
            s = Ellipsoid(np.linalg.inv(a.T)).support(x)
            assert abs(g - s) <= 1e-9 * max(abs(g), 1.0)

    def test_triangle_inequality(self):
        gen = philox(13)
        for n in (2, 4):
            for body in random_bodies(n, gen):
                x = gen.standard_normal((200, n))
                y = gen.standard_normal((200, n))
                lhs = body.gauge(x + y)
                rhs = body.gauge(x) + body.gauge(y)
                assert np.all(lhs <= rhs + 1e-9)

    def test_urysohn(self):
        # volume radius never beats the mean width (within 3 MC sigma)
        gen = philox(14)
        for n in (2, 4, 8):
            bodies = [Ellipsoid(gen.standard_normal((n, n)) + 3 * np.eye(n)),
                      Cube(float(gen.uniform(0.5, 2)), n),
                      LqBall(float(gen.uniform(1, 4)), 1.0, n)]
            for body in bodies:
                est = mean_width(body, 40_000, seed=int(gen.integers(1 << 30)))
                assert volume_radius(body) <= est.value + 3 * est.stderr


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(2, 5), st.floats(0.05, 20.0), st.integers(0, 2**31))
def test_gauge_homogeneity_property(n, lam, seed):
    gen = philox(seed)
    body = LqBall(float(gen.uniform(1, 5)), float(gen.uniform(0.5, 2)), n)
    x = gen.standard_normal(n)
    assert body.gauge(lam * x) == pytest.approx(lam * body.gauge(x), rel=1e-9)


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(2, 5), st.integers(0, 2**31))
def test_scaled_wrapper_consistency(n, seed):
    gen = philox(seed)
    body = Cube(1.0, n)
    c = float(gen.uniform(0.2, 5.0))
    x = gen.standard_normal(n)
    wrapped = Scaled(body, c)
    native = body.scaled(c)
    assert wrapped.gauge(x) == pytest.approx(native.gauge(x), rel=1e-12)
    assert wrapped.support(x) == pytest.approx(native.support(x), rel=1e-12)


class TestLinearImage:
    def test_square_invertible(self):
        t = np.array([[2.0, 1.0], [0.0, 1.0]])
        body = LinearImage(t, Cube(1.0, 2))
        x = np.array([1.5, 0.25])
        assert body.gauge(x) == pytest.approx(
            Cube(1.0, 2).gauge(np.linalg.solve(t, x)))

    def test_wide_ellipsoid_image(self):
        t = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, -1.0]])
        body = LinearImage(t, Ellipsoid.ball(3))
        # the image of the unit ball is the ellipsoid with Gram T T^T
        g = np.linalg.inv(t @ t.T)
        x = np.array([0.7, -0.4])
        assert body.gauge(x) == pytest.approx(math.sqrt(x @ g @ x), rel=1e-10)

    def test_wide_generic_rejected(self):
        t = np.ones((1, 2))
        with pytest.raises(ConstructionError):
            LinearImage(t, Cube(1.0, 2))

    def test_support_composes(self):
        t = np.array([[1.0, 2.0], [0.0, 1.0]])
        body = LinearImage(t, LqBall(1, 1, 2))
        theta = np.array([0.3, 0.9])
        assert body.support(theta) == pytest.approx(
            LqBall(1, 1, 2).support(t.T @ theta))


class TestCylinder:
    def test_gauge_ignores_free_coordinates(self):
        body = cylinder(3, 8)
        x = np.zeros(8)
        x[4] = 100.0
        assert body.gauge(x) == 0.0
        x[:3] = [1.0, 1.0, 1.0]
        assert body.gauge(x) == pytest.approx(1.0)

    def test_default_radius(self):
        body = cylinder(2, 4)
        assert body.gauge([math.sqrt(2), 0, 0, 0]) == pytest.approx(1.0)

    def test_bad_k(self):
        with pytest.raises(ConstructionError):
            cylinder(5, 4)


class TestSerialization:
    @pytest.mark.parametrize("body", [
        Ellipsoid(np.array([[1.5, 0.25], [0.0, 0.8]])),
        Cube(0.75, 3),
        LqBall(3.0, 1.25, 4),
        LqBall(math.inf, 2.0, 2),
        HPolytope(np.eye(2), np.array([1.0, 2.0])),
        cylinder(2, 5),
        Scaled(Cube(1.0, 2), 2.5),
        LinearImage(np.array([[2.0, 0.0], [1.0, 1.0]]), Cube(1.0, 2)),
    ])
    def test_roundtrip(self, body):
        clone = body_from_json(body_to_json(body))
        assert clone.kind == body.kind
        assert clone.dim == body.dim
        gen = philox(21)
        x = gen.standard_normal((32, body.dim))
        np.testing.assert_allclose(clone.gauge(x), body.gauge(x), rtol=1e-12)

    def test_precision_roundtrip(self):
        # matrices survive with at least 15 significant digits
        a = np.array([[1.0 / 3.0, 0.0], [0.0, math.pi]])
        clone = body_from_json(body_to_json(Ellipsoid(a)))
        np.testing.assert_array_equal(clone.matrix, a)


class TestDirectionSampler:
    def test_unit_norm_and_determinism(self):
        s1 = DirectionSampler(5, 42).draw(1000)
        s2 = DirectionSampler(5, 42).draw(1000)
        assert np.array_equal(s1, s2)
        np.testing.assert_allclose(np.linalg.norm(s1, axis=1), 1.0, rtol=1e-12)

    def test_uniformity_moments(self):
        dirs = unit_vectors(3, 200_000, 7)
        cov = dirs.T @ dirs / len(dirs)
        np.testing.assert_allclose(cov, np.eye(3) / 3.0, atol=5e-3)

    def test_scale_errors(self):
        with pytest.raises(DomainError):
            Cube(1.0, 2).scaled(-1.0)
