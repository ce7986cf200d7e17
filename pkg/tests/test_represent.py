import math

import numpy as np
import pytest

from fillscape.errors import ArgumentError, ChartError, ConfigError, UnsupportedDimensionError
from fillscape.metricfield import MetricField
from fillscape.represent import (
    EmbeddingVector,
    SampledSphere,
    bdr_embed,
    busemann_embed_euclidean,
    busemann_embed_hyperbolic,
    embed_points,
    embeddings_to_frame,
    gradient_map_degree,
    hyperbolic_busemann,
    hyperbolic_distance,
    hyperplane_embed,
    jacobian_bound_probe,
    norm_e,
    project_flat,
    project_hyperbolic,
    project_hyperbolic_closed_form,
    scalar_product_e,
    shrinking_jacobian,
    shrinking_projection,
)


class TestSampledSphere:
    @pytest.mark.parametrize("m", [3, 8, 64])
    def test_circle_moments(self, m):
        assert SampledSphere.circle(m).moment_error() <= 1e-12

    def test_sphere2_moments(self):
        sphere = SampledSphere.sphere2(24)
        assert sphere.moment_error() <= 1e-12
        assert sphere.weights.sum() == pytest.approx(1.0)
        assert sphere.total_measure == pytest.approx(4 * math.pi)

    @pytest.mark.parametrize("m", [2, 11, 13])
    def test_invalid_sizes(self, m):
        with pytest.raises(ArgumentError):
            SampledSphere.sphere2(m) if m > 3 else SampledSphere.circle(m)

    def test_for_dim(self):
        assert SampledSphere.for_dim(2, 16).ambient == 2
        with pytest.raises(UnsupportedDimensionError):
            SampledSphere.for_dim(4, 16)

    def test_max_gap_of_circle(self):
        assert SampledSphere.circle(16).max_gap() == pytest.approx(math.pi / 16, rel=1e-2)

    def test_csv_round_trip(self, tmp_path):
        sphere = SampledSphere.circle(8)
        path = tmp_path / "nodes.csv"
        sphere.to_frame().to_csv(path, index=False)
        again = SampledSphere.from_csv(path)
        np.testing.assert_allclose(again.nodes, sphere.nodes)

    def test_csv_needs_weights(self, tmp_path):
        path = tmp_path / "nodes.csv"
        path.write_text("s1,s2\n1,0\n0,1\n-1,0\n")
        with pytest.raises(ConfigError):
            SampledSphere.from_csv(path)

    def test_rejects_non_unit_nodes(self):
        with pytest.raises(ArgumentError):
            SampledSphere(np.array([[2.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]), np.ones(3))


class TestEmbeddingVector:
    def test_sup_norm(self):
        assert EmbeddingVector([1.0, -3.0, 2.0]).sup_norm == 3.0

    def test_arithmetic(self):
        u = EmbeddingVector([1.0, 2.0])
        v = EmbeddingVector([0.5, -1.0])
        np.testing.assert_allclose((u - 2 * v).values, [0.0, 4.0])
        assert len(u) == 2


class TestBusemann:
    def test_euclidean_is_linear(self):
        sphere = SampledSphere.circle(16)
        x = np.array([0.3, -0.7])
        np.testing.assert_allclose(busemann_embed_euclidean(x, sphere).values, sphere.nodes @ x)

    def test_euclidean_is_isometric_in_sup_norm(self, rng):
        sphere = SampledSphere.circle(64)
        x, y = rng.normal(size=2), rng.normal(size=2)
        gap = (busemann_embed_euclidean(x, sphere) - busemann_embed_euclidean(y, sphere)).sup_norm
        d = np.linalg.norm(x - y)
        assert d * math.cos(math.pi / 64) - 1e-12 <= gap <= d + 1e-12

    def test_hyperbolic_at_origin_vanishes(self):
        sphere = SampledSphere.circle(8)
        np.testing.assert_allclose(busemann_embed_hyperbolic(np.zeros(2), sphere).values, 0.0, atol=1e-15)

    def test_hyperbolic_differences_are_distances(self):
        # along the ray towards s the Busemann function decreases at unit rate
        sphere = SampledSphere.circle(8)
        r = math.tanh(0.5)
        u = busemann_embed_hyperbolic(np.array([r, 0.0]), sphere)
        assert u.values[0] == pytest.approx(-1.0, abs=1e-12)
        assert u.sup_norm == pytest.approx(hyperbolic_distance(np.zeros(2), [r, 0.0]), abs=1e-12)

    def test_chart_error(self):
        with pytest.raises(ChartError):
            busemann_embed_hyperbolic(np.array([1.0, 0.0]), SampledSphere.circle(8))

    def test_batched_matches_single(self, rng):
        sphere = SampledSphere.circle(12)
        X = 0.5 * rng.uniform(-1, 1, size=(5, 2))
        batch = hyperbolic_busemann(X, sphere.nodes)
        for x, row in zip(X, batch):
            np.testing.assert_allclose(row, busemann_embed_hyperbolic(x, sphere).values)

    def test_gradient_degree_of_flat_representation(self):
        sphere = SampledSphere.circle(16)
        degree = gradient_map_degree(lambda x: busemann_embed_euclidean(x, sphere).values, [0.1, 0.2], sphere)
        assert degree == 1


class TestDistanceRepresentations:
    def test_hyperplane_map_bounds_flat_coordinates(self):
        fld = MetricField.euclidean(1.0)
        sphere = SampledSphere.circle(8)
        x = np.array([0.2, -0.1])
        u = hyperplane_embed(fld, x, sphere, 32).values
        flat = sphere.nodes @ x
        assert np.all(u >= flat - 1e-8)
        assert np.all(u <= flat + 0.05)

    def test_embed_points_bdr(self):
        fld = MetricField.euclidean(1.0)
        values = embed_points(fld, [[0.0, 0.0]], "bdr", boundary_nodes=8)
        np.testing.assert_allclose(values, np.ones((1, 8)), atol=1e-8)

    def test_bdr_embed_is_one_lipschitz(self):
        fld = MetricField.euclidean(1.0)
        x, y = np.array([0.1, 0.2]), np.array([-0.3, 0.05])
        gap = (bdr_embed(fld, x, 8) - bdr_embed(fld, y, 8)).sup_norm
        assert gap <= np.linalg.norm(x - y) + 1e-8

    def test_bdr_nearly_preserves_distances(self, rng):
        fld = MetricField.euclidean(1.0)
        radius = 0.5 * np.sqrt(rng.uniform(size=40))
        theta = rng.uniform(0, 2 * math.pi, size=40)
        pts = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
        values = embed_points(fld, pts, "bdr", boundary_nodes=64)
        gaps = np.abs(values[::2] - values[1::2]).max(axis=1)
        ratios = gaps / np.linalg.norm(pts[::2] - pts[1::2], axis=1)
        assert ratios.max() <= 1.0 + 1e-8
        assert ratios.min() >= 0.99

    def test_embed_points_rejects_unknown(self):
        with pytest.raises(ArgumentError):
            embed_points(MetricField.euclidean(1.0), [[0.0, 0.0]], "isometric")

    def test_frame_columns(self):
        frame = embeddings_to_frame([[0.0, 1.0]], np.array([[1.0, 2.0, 3.0]]))
        assert list(frame.columns) == ["x1", "x2", "u0", "u1", "u2"]


class TestFlatProjection:
    def test_scalar_product_agrees_on_flat_image(self, rng):
        sphere = SampledSphere.circle(16)
        x, y = rng.normal(size=2), rng.normal(size=2)
        u, v = sphere.nodes @ x, sphere.nodes @ y
        assert scalar_product_e(u, v, sphere) == pytest.approx(x @ y)
        assert norm_e(u, sphere) == pytest.approx(np.linalg.norm(x))

    def test_projection_inverts_flat_map(self, rng):
        sphere = SampledSphere.sphere2(24)
        x = rng.normal(size=3)
        np.testing.assert_allclose(project_flat(sphere.nodes @ x, sphere), x, atol=1e-12)

    def test_shrinking_projection_fixes_flat_image(self):
        sphere = SampledSphere.circle(16)
        x = np.array([[0.4, -0.3]])
        np.testing.assert_allclose(shrinking_projection(x @ sphere.nodes.T, sphere, 0.3), x)

    def test_jacobian_is_one_on_flat_image(self):
        sphere = SampledSphere.circle(16)
        J, r2 = shrinking_jacobian(sphere.nodes @ np.array([0.2, 0.1]), sphere, 0.1)
        assert J == pytest.approx(1.0, abs=1e-6)
        assert r2 == pytest.approx(0.0, abs=1e-20)

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            project_flat(np.ones(5), SampledSphere.circle(8))


class TestJacobianBound:
    def test_no_violations_with_default_rate(self):
        report = jacobian_bound_probe(SampledSphere.circle(16), samples=20, radius=10.0, seed=0)
        assert report.violations == 0
        assert report.fitted_c > 0
        assert report.lam == pytest.approx(2.0 / 400.0)
        assert len(report.to_frame()) == 20

    def test_reproducible(self):
        a = jacobian_bound_probe(SampledSphere.circle(8), samples=10, seed=3)
        b = jacobian_bound_probe(SampledSphere.circle(8), samples=10, seed=3)
        np.testing.assert_array_equal(a.jacobians, b.jacobians)

    def test_needs_samples(self):
        with pytest.raises(ArgumentError):
            jacobian_bound_probe(SampledSphere.circle(8), samples=5)


class TestHyperbolicProjection:
    @pytest.mark.parametrize("x", [[0.0, 0.0], [0.3, -0.2], [-0.5, 0.4]])
    def test_recovers_point(self, x):
        sphere = SampledSphere.circle(128)
        phi = busemann_embed_hyperbolic(np.array(x), sphere)
        np.testing.assert_allclose(project_hyperbolic(phi, sphere, tol=1e-12), x, atol=1e-8)

    def test_recovers_point_in_three_dimensions(self):
        sphere = SampledSphere.sphere2(200)
        x = np.array([0.1, -0.05, 0.08])
        phi = busemann_embed_hyperbolic(x, sphere)
        np.testing.assert_allclose(project_hyperbolic(phi, sphere, tol=1e-12), x, atol=5e-3)

    def test_closed_form_agrees_with_newton(self, rng):
        sphere = SampledSphere.circle(32)
        phi = 0.3 * rng.normal(size=32)
        np.testing.assert_allclose(project_hyperbolic(phi, sphere, tol=1e-12),
                                   project_hyperbolic_closed_form(phi, sphere), atol=1e-9)

    def test_constant_shift_is_invisible(self, rng):
        sphere = SampledSphere.circle(32)
        phi = 0.3 * rng.normal(size=32)
        np.testing.assert_allclose(project_hyperbolic(phi, sphere), project_hyperbolic(phi + 5.0, sphere),
                                   atol=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_default_tolerance_is_reached(self, seed):
        sphere = SampledSphere.circle(32)
        phi = 0.3 * np.random.default_rng(seed).normal(size=32)
        np.testing.assert_allclose(project_hyperbolic(phi, sphere),
                                   project_hyperbolic_closed_form(phi, sphere), atol=1e-8)

    def test_non_finite_input(self):
        sphere = SampledSphere.circle(8)
        with pytest.raises(ArgumentError):
            project_hyperbolic(np.full(8, np.nan), sphere)
