import math

import numpy as np
import pytest

from fillscape.errors import ArgumentError, ConfigError, SurfaceError
from fillscape.metricfield import MetricField
from fillscape.represent import EmbeddingVector, SampledSphere
from fillscape.surface import (
    AreaCache,
    OptimizerConfig,
    SimplicialSurface,
    cell_area,
    disc_mesh,
    disjoint_union,
    embed_filling,
    euclidean_area,
    flat_disc_surface,
    harmonic_extension,
    jitter_mesh,
    jitter_surface,
    load_surface,
    minimize_filling,
    project_surface_flat,
    remesh_start,
    save_surface,
    sliver_count,
    surface_area,
    surface_from_dict,
    surface_to_dict,
)


def polygon_area(points: np.ndarray, cells: np.ndarray) -> float:
    a = points[cells[:, 1]] - points[cells[:, 0]]
    b = points[cells[:, 2]] - points[cells[:, 0]]
    return float(np.sum(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) / 2)


@pytest.fixture(scope="module")
def circle16():
    return SampledSphere.circle(16)


class TestDiscMesh:
    def test_ring_layout(self):
        mesh = disc_mesh(1.0, 100)
        assert mesh.boundary.sum() == 24
        np.testing.assert_allclose(np.linalg.norm(mesh.points[mesh.boundary], axis=1), 1.0)
        assert polygon_area(mesh.points, mesh.cells) == pytest.approx(12 * math.sin(math.pi / 12), rel=1e-12)

    def test_cells_are_positively_oriented(self):
        mesh = disc_mesh(2.0, 40)
        a = mesh.points[mesh.cells[:, 1]] - mesh.points[mesh.cells[:, 0]]
        b = mesh.points[mesh.cells[:, 2]] - mesh.points[mesh.cells[:, 0]]
        assert np.all(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] > 0)

    def test_ball_mesh(self):
        mesh = disc_mesh(1.0, 24, dim=3)
        assert mesh.cells.shape[1] == 4
        assert mesh.boundary.sum() == 12

    def test_invalid_arguments(self):
        with pytest.raises(ArgumentError):
            disc_mesh(0.0, 24)
        with pytest.raises(ArgumentError):
            disc_mesh(1.0, 2)

    def test_jitter_keeps_boundary(self):
        mesh = disc_mesh(1.0, 24)
        moved = jitter_mesh(mesh, 0.3, seed=5)
        np.testing.assert_array_equal(moved.points[mesh.boundary], mesh.points[mesh.boundary])
        assert polygon_area(moved.points, moved.cells) == pytest.approx(polygon_area(mesh.points, mesh.cells))
        with pytest.raises(ArgumentError):
            jitter_mesh(mesh, 0.5, seed=5)


class TestSimplicialSurface:
    def test_open_boundary_needs_fixed_vertices(self):
        with pytest.raises(SurfaceError):
            SimplicialSurface(np.eye(3), [[0, 1, 2]], [False, False, False])

    def test_inconsistent_orientation(self):
        V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        with pytest.raises(SurfaceError):
            SimplicialSurface(V, [[0, 1, 2], [0, 1, 3]], [True] * 4)

    def test_weights_are_normalized(self):
        surface = SimplicialSurface(np.eye(3), [[0, 1, 2]], [True] * 3, weights=[2.0, 2.0, 4.0])
        np.testing.assert_allclose(surface.weights, [0.25, 0.25, 0.5])

    def test_sphere_size_must_match(self, circle16):
        with pytest.raises(SurfaceError):
            SimplicialSurface(np.eye(3), [[0, 1, 2]], [True] * 3, sphere=circle16)

    def test_free_vertices(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        assert len(surface.free) == int((~surface.fixed).sum())
        assert surface.dim == 2
        assert surface.ambient_dim == 16


class TestAreas:
    def test_cell_area_of_flat_triangle(self, circle16):
        verts = [EmbeddingVector(circle16.nodes @ p) for p in ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0])]
        assert cell_area(verts, "loewner") == pytest.approx(0.5, rel=1e-7)

    def test_collinear_cell_has_zero_area(self, circle16):
        verts = [circle16.nodes @ p for p in ([0.0, 0.0], [1.0, 1.0], [2.0, 2.0])]
        assert cell_area(verts, "busemann") == 0.0

    def test_flat_disc_loewner_is_euclidean(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        mesh = disc_mesh(1.0, 24)
        loewner = surface_area(surface, "loewner")
        assert loewner.total == pytest.approx(polygon_area(mesh.points, mesh.cells), rel=1e-7)
        assert loewner.slivers == 0
        assert surface_area(surface, "busemann").total < loewner.total

    def test_euclidean_area_matches_mesh(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        mesh = disc_mesh(1.0, 24)
        area, _ = euclidean_area(surface)
        assert area == pytest.approx(polygon_area(mesh.points, mesh.cells), rel=1e-12)

    def test_refinement_barely_moves_flat_area(self, circle16):
        coarse = surface_area(flat_disc_surface(1.0, 200, circle16), "loewner").total
        fine = surface_area(flat_disc_surface(1.0, 400, circle16), "loewner").total
        assert abs(fine - coarse) / fine < 0.005
        assert coarse == pytest.approx(math.pi, rel=0.01)
        assert fine == pytest.approx(math.pi, rel=0.01)

    def test_euclidean_gradient(self, circle16):
        surface = jitter_surface(flat_disc_surface(1.0, 24, circle16), 0.05, seed=2)
        _, grad = euclidean_area(surface)
        i = surface.free[0]
        h = 1e-6
        for k in (0, 5, 11):
            X = surface.vertices.copy()
            X[i, k] += h
            up, _ = euclidean_area(surface, X)
            X[i, k] -= 2 * h
            down, _ = euclidean_area(surface, X)
            assert grad[i, k] == pytest.approx((up - down) / (2 * h), abs=1e-6)

    def test_breakdown_frame(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        breakdown = surface_area(surface, "holmes_thompson")
        frame = breakdown.to_frame()
        assert len(frame) == len(surface.cells)
        assert frame["area"].sum() == pytest.approx(breakdown.total)

    def test_disjoint_union_adds_areas(self, circle16):
        a = flat_disc_surface(1.0, 24, circle16)
        b = a.scaled(0.5)
        union = disjoint_union(a, b)
        assert surface_area(union, "loewner").total == pytest.approx(1.25 * surface_area(a, "loewner").total)

    def test_area_cache_reuses_values(self):
        cache = AreaCache()
        calls = []
        V = np.eye(3)[:, :2]
        for _ in range(3):
            cache.get("loewner", V, lambda: calls.append(1) or 2.0)
        assert len(calls) == 1

    def test_sliver_count(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        collapsed = surface.with_vertices(np.zeros_like(surface.vertices))
        assert sliver_count(surface) == 0
        assert sliver_count(collapsed) == len(surface.cells)


class TestBuilders:
    def test_embed_filling_of_flat_disc(self, circle16):
        mesh = disc_mesh(1.0, 24)
        surface = embed_filling(MetricField.euclidean(1.0), mesh, "busemann_euclidean", circle16)
        assert surface.meta["riemannian_volume"] == pytest.approx(math.pi, rel=1e-8)
        np.testing.assert_allclose(surface.vertices, mesh.points @ circle16.nodes.T)

    def test_embed_filling_dimension_mismatch(self, circle16):
        with pytest.raises(ArgumentError):
            embed_filling(MetricField.euclidean(1.0, dim=3), disc_mesh(1.0, 24), "busemann_euclidean", circle16)

    def test_flat_projection_is_idempotent(self, circle16):
        surface = jitter_surface(flat_disc_surface(1.0, 24, circle16), 0.1, seed=4)
        once = project_surface_flat(surface)
        np.testing.assert_allclose(project_surface_flat(once).vertices, once.vertices, atol=1e-12)
        np.testing.assert_allclose(once.vertices[once.fixed], surface.vertices[surface.fixed], atol=1e-12)

    def test_flat_projection_needs_sphere(self):
        surface = SimplicialSurface(np.eye(3), [[0, 1, 2]], [True] * 3)
        with pytest.raises(SurfaceError):
            project_surface_flat(surface)

    def test_jitter_moves_only_free_vertices(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        moved = jitter_surface(surface, 0.1, seed=1)
        np.testing.assert_array_equal(moved.vertices[surface.fixed], surface.vertices[surface.fixed])
        assert not np.allclose(moved.vertices[surface.free], surface.vertices[surface.free])

    def test_harmonic_extension(self, rng):
        mesh = disc_mesh(1.0, 40)
        values = np.zeros((len(mesh.points), 2))
        values[mesh.boundary] = rng.normal(size=(int(mesh.boundary.sum()), 2))
        out = harmonic_extension(mesh.points, mesh.cells, mesh.boundary, values)
        np.testing.assert_array_equal(out[mesh.boundary], values[mesh.boundary])
        lo, hi = values[mesh.boundary].min(axis=0), values[mesh.boundary].max(axis=0)
        assert np.all(out[~mesh.boundary] >= lo - 1e-12)
        assert np.all(out[~mesh.boundary] <= hi + 1e-12)

    def test_remesh_start_keeps_boundary(self, circle16):
        mesh = disc_mesh(1.0, 24)
        surface = flat_disc_surface(1.0, 24, circle16)
        start = remesh_start(surface, mesh, seed=3)
        np.testing.assert_array_equal(start.vertices[start.fixed], surface.vertices[surface.fixed])
        assert start.meta["start"] == "remesh"

    def test_remesh_start_needs_matching_mesh(self, circle16):
        surface = flat_disc_surface(1.0, 24, circle16)
        with pytest.raises(SurfaceError):
            remesh_start(surface, disc_mesh(1.0, 100), seed=3)


class TestMinimizeFilling:
    def test_area_never_increases(self):
        sphere = SampledSphere.circle(8)
        start = jitter_surface(flat_disc_surface(1.0, 24, sphere), 0.1, seed=0)
        config = OptimizerConfig(iterations=20, levels=3)
        result, trace = minimize_filling(start, "loewner", config, seed=0)
        areas = trace["area"].to_numpy()
        assert np.all(np.diff(areas) <= 1e-12 * areas[0])
        assert areas[-1] <= areas[0]
        assert surface_area(result, "loewner").total == pytest.approx(areas[-1], rel=1e-9)
        np.testing.assert_array_equal(result.vertices[result.fixed], start.vertices[start.fixed])

    def test_flat_disc_is_stationary(self, circle16):
        start = flat_disc_surface(1.0, 24, circle16)
        result, trace = minimize_filling(start, "loewner", OptimizerConfig(iterations=20, levels=2))
        before = surface_area(start, "loewner").total
        assert abs(surface_area(result, "loewner").total - before) <= 1e-6
        assert abs(trace["area"].iloc[-1] - before) <= 1e-6

    def test_input_is_not_modified(self):
        sphere = SampledSphere.circle(8)
        start = jitter_surface(flat_disc_surface(1.0, 24, sphere), 0.1, seed=0)
        before = start.vertices.copy()
        minimize_filling(start, "busemann", OptimizerConfig(iterations=5, levels=1, surrogate=False))
        np.testing.assert_array_equal(start.vertices, before)

    def test_nothing_to_move(self):
        surface = SimplicialSurface(np.eye(3), [[0, 1, 2]], [True] * 3)
        result, trace = minimize_filling(surface)
        assert len(trace) == 1
        np.testing.assert_array_equal(result.vertices, surface.vertices)

    @pytest.mark.parametrize("kwargs", [{"iterations": 0}, {"factor": 1.0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ArgumentError):
            OptimizerConfig(**kwargs)


class TestSerialization:
    def test_save_and_load(self, circle16, tmp_path):
        surface = flat_disc_surface(1.0, 24, circle16)
        path = save_surface(surface, tmp_path / "surface.json")
        again = load_surface(path)
        np.testing.assert_allclose(again.vertices, surface.vertices)
        np.testing.assert_allclose(again.weights, surface.weights)
        np.testing.assert_array_equal(again.fixed, surface.fixed)

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            surface_from_dict({"m": 3, "vertices": [], "cells": [], "fixed": [], "colour": "red"})

    def test_declared_dimension_mismatch(self):
        data = surface_to_dict(SimplicialSurface(np.eye(3), [[0, 1, 2]], [True] * 3))
        data["m"] = 4
        with pytest.raises(ConfigError):
            surface_from_dict(data)

    def test_missing_cells(self):
        with pytest.raises(ConfigError):
            surface_from_dict({"m": 3, "vertices": np.eye(3).tolist(), "fixed": [True] * 3})

    def test_bad_boundary_is_a_surface_error(self):
        data = surface_to_dict(SimplicialSurface(np.eye(3), [[0, 1, 2]], [True] * 3))
        data["fixed"] = [False] * 3
        with pytest.raises(SurfaceError):
            surface_from_dict(data)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_surface(path)
