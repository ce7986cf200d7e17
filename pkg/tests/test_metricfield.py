import math

import numpy as np
import pytest

from fillscape.errors import ArgumentError, CollarError, ConfigError, UnsupportedDimensionError
from fillscape.metricfield import (
    MetricField,
    boundary_arc_parameters,
    boundary_convexity,
    boundary_distance_table,
    boundary_length,
    distance,
    distances_from,
    field_from_config,
    field_from_dict,
    field_to_dict,
    geodesic_shoot,
    graph_distance,
    riemannian_volume,
    simplicity_check,
)
from fillscape.represent import hyperbolic_distance


@pytest.fixture(scope="module")
def flat():
    return MetricField.euclidean(1.0)


@pytest.fixture(scope="module")
def poincare():
    return MetricField.hyperbolic(0.5)


class TestMetricField:
    def test_euclidean_tensor(self, flat):
        np.testing.assert_allclose(flat.tensor([0.3, -0.2]), np.eye(2))

    def test_hyperbolic_tensor(self, poincare):
        x = np.array([0.3, 0.1])
        lam = 2.0 / (1.0 - x @ x)
        np.testing.assert_allclose(poincare.tensor(x), lam ** 2 * np.eye(2))

    def test_collar(self, flat):
        flat.tensor([1.04, 0.0])
        with pytest.raises(CollarError):
            flat.tensor([2.0, 0.0])

    def test_chart_radius_too_large(self):
        with pytest.raises(ArgumentError):
            MetricField.hyperbolic(0.99)

    def test_unsupported_dimension(self):
        with pytest.raises(UnsupportedDimensionError):
            MetricField.euclidean(1.0, dim=4)

    def test_not_positive_definite(self):
        with pytest.raises(ArgumentError):
            MetricField.constant([[1.0, 2.0], [2.0, 1.0]])

    def test_perturbation_is_seeded_and_small(self, flat):
        a = flat.with_perturbation(0.05, seed=3)
        b = flat.with_perturbation(0.05, seed=3)
        x = np.array([[0.1, 0.2], [-0.4, 0.5]])
        np.testing.assert_array_equal(a.tensor(x), b.tensor(x))
        assert np.abs(a.tensor(x) - np.eye(2)).max() <= 0.05 + 1e-12

    def test_zero_perturbation_is_identity(self, flat):
        assert flat.with_perturbation(0.0, seed=1) is flat

    def test_scaled(self, flat):
        np.testing.assert_allclose(flat.scaled(4.0).tensor([0.0, 0.0]), 4.0 * np.eye(2))

    def test_custom_grid_matches_constant(self):
        proto = MetricField.euclidean(1.0)
        n = len(proto.grid_axis)
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        custom = MetricField.custom(np.broadcast_to(A, (n, n, 2, 2)), radius=1.0, spacing=proto.spacing)
        np.testing.assert_allclose(custom.tensor([0.37, -0.61]), A, atol=1e-10)


class TestSerialization:
    def test_closed_form_round_trip(self, poincare):
        fld = poincare.with_conformal_factor(0.1, seed=2)
        again = field_from_dict(field_to_dict(fld, include_nodes=False))
        x = np.array([[0.1, 0.2], [0.3, -0.3]])
        np.testing.assert_allclose(again.tensor(x), fld.tensor(x))

    def test_custom_from_nodes(self):
        fld = MetricField.euclidean(1.0, spacing=0.25)
        data = field_to_dict(fld)
        data["kind"] = "custom"
        data.pop("params")
        again = field_from_dict(data)
        assert again.kind == "custom"
        np.testing.assert_allclose(again.tensor([0.2, 0.1]), np.eye(2), atol=1e-10)

    @pytest.mark.parametrize("data,kind", [
        ({"kind": "euclidean"}, "euclidean"),
        ({"kind": "hyperbolic", "R": 0.4}, "hyperbolic"),
        ({"kind": "perturbed", "base": "euclidean", "eps": 0.02, "seed": 1}, "perturbed"),
        ({"kind": "conformal", "base": "hyperbolic", "R": 0.5, "amplitude": 0.1}, "conformal"),
        ({"kind": "periodic", "amplitude": 0.1}, "periodic"),
    ])
    def test_from_config(self, data, kind):
        assert field_from_config(data).kind == kind

    @pytest.mark.parametrize("data", [
        {"kind": "torus"},
        {"kind": "euclidean", "R": 1.0, "colour": "red"},
        {"kind": "constant"},
    ])
    def test_from_config_rejects(self, data):
        with pytest.raises(ConfigError):
            field_from_config(data)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            field_from_dict({"kind": "euclidean", "R": 1.0, "grid": 3})


class TestGeodesics:
    def test_straight_segment(self, flat):
        path = geodesic_shoot(flat, [0.0, 0.0], [0.3, 0.4], T=1.0)
        np.testing.assert_allclose(path.endpoint, [0.3, 0.4], atol=1e-12)
        assert path.length == pytest.approx(0.5, rel=1e-10)
        assert not path.exited

    def test_hyperbolic_radial_geodesic(self, poincare):
        # unit hyperbolic speed at the origin is Euclidean speed 1/2
        path = geodesic_shoot(poincare, [0.0, 0.0], [0.5, 0.0], T=1.0)
        assert path.endpoint[0] == pytest.approx(math.tanh(0.5), abs=1e-6)
        assert path.length == pytest.approx(1.0, abs=1e-6)

    def test_exit_flag(self, flat):
        path = geodesic_shoot(flat, [0.0, 0.0], [2.0, 0.0], T=1.0)
        assert path.exited

    def test_zero_velocity_rejected(self, flat):
        with pytest.raises(ArgumentError):
            geodesic_shoot(flat, [0.0, 0.0], [0.0, 0.0])


class TestDistance:
    def test_euclidean_boundary_points(self, flat):
        length, _ = distance(flat, [1.0, 0.0], [0.0, 1.0])
        assert length == pytest.approx(math.sqrt(2.0), abs=1e-8)

    def test_identity_case(self, flat):
        length, _ = distance(flat, [0.2, 0.2], [0.2, 0.2])
        assert length == 0.0

    def test_hyperbolic_closed_form(self, poincare):
        x, y = np.array([0.3, 0.0]), np.array([-0.2, 0.25])
        length, _ = distance(poincare, x, y)
        assert length == pytest.approx(hyperbolic_distance(x, y), abs=1e-6)

    def test_outside_domain(self, flat):
        with pytest.raises(ArgumentError):
            distance(flat, [0.0, 0.0], [1.5, 0.0])

    def test_graph_distance_is_upper_estimate(self, flat):
        length, path = graph_distance(flat, [-0.5, 0.0], [0.5, 0.3])
        exact = math.hypot(1.0, 0.3)
        assert exact - 1e-12 <= length <= 1.1 * exact
        np.testing.assert_allclose(path[0], [-0.5, 0.0])
        np.testing.assert_allclose(path[-1], [0.5, 0.3])

    def test_distances_from_many_targets(self, flat):
        targets = np.array([[0.5, 0.0], [0.0, -0.5], [0.3, 0.4]])
        lengths, residuals = distances_from(flat, np.zeros(2), targets)
        np.testing.assert_allclose(lengths, [0.5, 0.5, 0.5], atol=1e-8)
        assert np.all(residuals <= 1e-9)


class TestDistanceInvariants:
    def test_conformal_bounds_order_the_tables(self, flat):
        amplitude = 0.02
        conformal = flat.with_conformal_factor(amplitude, seed=4)
        lower = boundary_distance_table(flat.scaled(math.exp(-2 * amplitude)), 8).values
        middle = boundary_distance_table(conformal, 8).values
        upper = boundary_distance_table(flat.scaled(math.exp(2 * amplitude)), 8).values
        assert np.all(middle >= lower - 1e-6)
        assert np.all(upper >= middle - 1e-6)

    def test_rotated_chart_of_constant_metric(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        c, s = math.cos(0.7), math.sin(0.7)
        R = np.array([[c, -s], [s, c]])
        x, y = np.array([0.4, -0.1]), np.array([-0.3, 0.35])
        original, _ = distance(MetricField.constant(A), x, y)
        rotated, _ = distance(MetricField.constant(R @ A @ R.T), R @ x, R @ y)
        assert rotated == pytest.approx(original, abs=1e-6)

    def test_rotated_chart_of_hyperbolic_metric(self, poincare):
        c, s = math.cos(2.1), math.sin(2.1)
        R = np.array([[c, -s], [s, c]])
        x, y = np.array([0.35, 0.1]), np.array([-0.2, -0.3])
        original, _ = distance(poincare, x, y)
        rotated, _ = distance(poincare, R @ x, R @ y)
        assert rotated == pytest.approx(original, abs=1e-6)

    def test_reversibility(self, flat):
        fld = flat.with_perturbation(0.05, seed=1)
        x, y = np.array([0.5, 0.2]), np.array([-0.4, -0.6])
        forward, _ = distance(fld, x, y)
        backward, _ = distance(fld, y, x)
        assert forward == pytest.approx(backward, abs=1e-6)

    def test_hyperbolic_radius_is_log_three(self, poincare):
        length, _ = distance(poincare, [0.0, 0.0], [0.5, 0.0])
        assert length == pytest.approx(math.log(3.0), abs=1e-6)

    def test_step_halving_shows_fourth_order(self, poincare):
        errors = [abs(distance(poincare, [0.0, 0.0], [0.5, 0.0], step=h)[0] - math.log(3.0))
                  for h in (1.0 / 8.0, 1.0 / 16.0)]
        assert errors[0] >= 8.0 * errors[1]


class TestQuadrature:
    def test_euclidean_area(self, flat):
        assert riemannian_volume(flat) == pytest.approx(math.pi, rel=1e-10)

    def test_hyperbolic_area(self, poincare):
        assert riemannian_volume(poincare) == pytest.approx(4 * math.pi / 3, rel=1e-8)

    def test_hemisphere_area(self):
        assert riemannian_volume(MetricField.sphere(math.pi / 2)) == pytest.approx(2 * math.pi, rel=1e-6)

    def test_euclidean_ball_volume(self):
        assert riemannian_volume(MetricField.euclidean(1.0, dim=3)) == pytest.approx(4 * math.pi / 3, rel=1e-8)

    def test_boundary_length(self, flat, poincare):
        assert boundary_length(flat) == pytest.approx(2 * math.pi, rel=1e-10)
        assert boundary_length(poincare) == pytest.approx(8 * math.pi / 3, rel=1e-10)

    def test_arc_parameters(self, flat):
        np.testing.assert_allclose(boundary_arc_parameters(flat, 8), 2 * math.pi * np.arange(8) / 8, rtol=1e-10)


class TestBoundaryDistanceTable:
    def test_chord_lengths(self, flat):
        table = boundary_distance_table(flat, 8)
        i, j = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
        chords = 2 * np.abs(np.sin(math.pi * (i - j) / 8))
        np.testing.assert_allclose(table.values, chords, atol=1e-8)
        np.testing.assert_array_equal(table.values, table.values.T)
        assert table.triangle_defect() <= 1e-8

    def test_hyperbolic_table(self, poincare):
        table = boundary_distance_table(poincare, 8)
        nodes = table.boundary_nodes
        for a in range(8):
            for b in range(a + 1, 8):
                assert table.values[a, b] == pytest.approx(hyperbolic_distance(nodes[a], nodes[b]), abs=1e-6)
        assert table.domination_margin(np.zeros((8, 8))) == 0.0

    def test_too_few_points(self, flat):
        with pytest.raises(ArgumentError):
            boundary_distance_table(flat, 2)

    def test_csv_layout(self, flat, tmp_path):
        table = boundary_distance_table(flat, 8)
        path = tmp_path / "table.csv"
        table.to_csv(path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[0] == "angle"
        assert len(header) == 9
        assert len(table.metadata_frame()) == 8


class TestSimplicity:
    def test_boundary_convexity_of_disc(self):
        convexity, _ = boundary_convexity(MetricField.euclidean(2.0), 64)
        assert convexity == pytest.approx(0.5, rel=1e-8)

    def test_euclidean_disc_is_simple(self, flat):
        report = simplicity_check(flat, samples=100, seed=0)
        assert report.boundary_convexity == pytest.approx(1.0, rel=1e-8)
        assert report.conjugate_point_free
        assert report.minimizing is True
        assert report.verdict == "simple"
        assert report.to_dict()["seed"] == 0

    def test_needs_enough_samples(self, flat):
        with pytest.raises(ArgumentError):
            simplicity_check(flat, samples=10)

    def test_cap_beyond_hemisphere_is_not_simple(self):
        report = simplicity_check(MetricField.sphere(2.0), samples=100, seed=0)
        # geodesic curvature of the boundary circle is cot(2) < 0
        assert report.boundary_convexity == pytest.approx(1.0 / math.tan(2.0), rel=1e-6)
        assert not report.simple
        assert report.verdict == "not simple"
