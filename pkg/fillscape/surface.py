"""Simplicial surfaces in the sampled L-infinity space and their Finsler areas."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve
from scipy.spatial import Delaunay

from .errors import ArgumentError, ConfigError, SurfaceError, UnsupportedDimensionError
from .logger import get_logger
from .metricfield import MetricField, fibonacci_sphere, riemannian_volume
from .normspace import AreaDensity, induced_norm, volume_density
from .parallel import derived_rng, parallel_map
from .represent import EmbeddingVector, SampledSphere, embed_points

DEGENERATE_TOL = 1e-12


# Planar meshes

@dataclass(frozen=True, eq=False)
class PlanarMesh:
    """A consistently oriented triangulation of a disc (or tetrahedralization of a ball)."""

    points: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    radius: float

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def spacing(self) -> float:
        edges = _edges(self.cells)
        return float(np.median(np.linalg.norm(self.points[edges[:, 0]] - self.points[edges[:, 1]], axis=1)))


def _edges(cells: np.ndarray) -> np.ndarray:
    pairs = np.vstack([cells[:, [i, j]] for i, j in combinations(range(cells.shape[1]), 2)])
    return np.unique(np.sort(pairs, axis=1), axis=0)


def _orient(points: np.ndarray, cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Positively orient cells; returns (cells, signed volumes)."""
    base = points[cells[:, 0]]
    E = np.stack([points[cells[:, i]] - base for i in range(1, cells.shape[1])], axis=2)
    vol = np.linalg.det(E)
    cells = cells.copy()
    flip = vol < 0
    cells[flip, 0], cells[flip, 1] = cells[flip, 1], cells[flip, 0].copy()
    return cells, np.abs(vol)


def _triangulate(points: np.ndarray, boundary: np.ndarray, radius: float) -> PlanarMesh:
    tri = Delaunay(points)
    cells, vol = _orient(points, tri.simplices.astype(int))
    cells = cells[vol > 1e-10 * radius ** points.shape[1]]
    return PlanarMesh(points, cells, boundary, radius)


def disc_mesh(radius: float, cells: int, dim: int = 2) -> PlanarMesh:
    """Concentric-ring Delaunay mesh of the disc (dim 2) or Fibonacci-shell mesh of the ball (dim 3).

    In dimension 2 ring j carries s*j points (s = 4 below 24 cells, else 6)
    and L = round(sqrt(cells / s)) rings give about `cells` triangles.
    """
    if radius <= 0:
        raise ArgumentError(f"Mesh radius must be positive, got {radius}")
    if cells < 4:
        raise ArgumentError(f"A disc mesh needs at least 4 cells, got {cells}")
    if dim == 2:
        s = 4 if cells < 24 else 6
        rings = max(1, int(round(math.sqrt(cells / s))))
        pts = [np.zeros((1, 2))]
        for j in range(1, rings + 1):
            theta = 2 * math.pi * np.arange(s * j) / (s * j)
            pts.append(radius * j / rings * np.column_stack([np.cos(theta), np.sin(theta)]))
        count = s * rings
    elif dim == 3:
        shells = max(1, int(round((cells / 24.0) ** (1.0 / 3.0))))
        pts = [np.zeros((1, 3))]
        for j in range(1, shells + 1):
            pts.append(radius * j / shells * fibonacci_sphere(max(6, 12 * j * j)))
        count = max(6, 12 * shells * shells)
    else:
        raise UnsupportedDimensionError(f"Meshes are built for dimension 2 or 3, got {dim}")
    points = np.vstack(pts)
    boundary = np.zeros(len(points), dtype=bool)
    boundary[-count:] = True
    return _triangulate(points, boundary, radius)


def jitter_mesh(mesh: PlanarMesh, amplitude: float, seed: int) -> PlanarMesh:
    """Re-triangulate after moving interior points by up to amplitude * spacing."""
    if not 0.0 <= amplitude <= 0.4:
        raise ArgumentError(f"Mesh jitter amplitude must lie in [0, 0.4], got {amplitude}")
    rng = np.random.default_rng(seed)
    pts = mesh.points.copy()
    interior = ~mesh.boundary
    step = amplitude * mesh.spacing
    offsets = rng.uniform(-1.0, 1.0, size=(int(interior.sum()), mesh.dim))
    pts[interior] += step * offsets / np.maximum(1.0, np.linalg.norm(offsets, axis=1, keepdims=True))
    return _triangulate(pts, mesh.boundary.copy(), mesh.radius)


# Surfaces

@dataclass(eq=False)
class SimplicialSurface:
    """An oriented n-dimensional simplicial complex with vertices in R^m.

    `weights` are the quadrature weights defining <u, v>_e = n sum w u v on
    the ambient coordinates; `sphere` is kept when the coordinates are
    indexed by sphere nodes so the flat projection is available.
    """

    vertices: np.ndarray
    cells: np.ndarray
    fixed: np.ndarray
    weights: Optional[np.ndarray] = None
    sphere: Optional[SampledSphere] = None
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float)
        C = np.array(self.cells, dtype=int)
        F = np.array(self.fixed, dtype=bool)
        if V.ndim != 2 or C.ndim != 2 or C.shape[1] not in (3, 4):
            raise SurfaceError(f"Expected N x m vertices and C x 3 or C x 4 cells, got {V.shape} and {C.shape}")
        if F.shape != (len(V),):
            raise SurfaceError("fixed must flag every vertex")
        if len(C) and (C.min() < 0 or C.max() >= len(V)):
            raise SurfaceError("Cell references a vertex that does not exist")
        if self.sphere is not None:
            if self.sphere.size != V.shape[1]:
                raise SurfaceError("Sphere node count differs from the ambient dimension")
            w = self.sphere.weights
        elif self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (V.shape[1],) or np.any(w <= 0):
                raise SurfaceError("weights must be positive with one entry per ambient coordinate")
            w = w / w.sum()
        else:
            w = np.full(V.shape[1], 1.0 / V.shape[1])
        self.vertices, self.cells, self.fixed, self.weights = V, C, F, w
        self._check_boundary()

    def _check_boundary(self):
        """Interior faces must cancel; faces on the boundary must have fixed vertices."""
        if not len(self.cells):
            return
        k = self.cells.shape[1]
        faces, signs = [], []
        for i in range(k):
            face = np.delete(self.cells, i, axis=1)
            order = np.argsort(face, axis=1)
            parity = _permutation_parity(order)
            faces.append(np.take_along_axis(face, order, axis=1))
            signs.append((-1) ** i * parity)
        faces = np.vstack(faces)
        signs = np.concatenate(signs)
        uniq, inverse, counts = np.unique(faces, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        total = np.bincount(inverse, weights=signs, minlength=len(uniq))
        if np.any(counts > 2):
            raise SurfaceError("A face is shared by more than two cells")
        if np.any((counts == 2) & (total != 0)):
            raise SurfaceError("Cells are not consistently oriented")
        boundary_faces = uniq[counts == 1]
        if len(boundary_faces) and not np.all(self.fixed[boundary_faces]):
            raise SurfaceError("Boundary faces must have fixed vertices")

    @property
    def dim(self) -> int:
        return self.cells.shape[1] - 1

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    @property
    def vectors(self) -> List[EmbeddingVector]:
        return [EmbeddingVector(v) for v in self.vertices]

    def with_vertices(self, vertices: np.ndarray) -> "SimplicialSurface":
        return SimplicialSurface(vertices, self.cells, self.fixed, self.weights, self.sphere, dict(self.meta))

    def scaled(self, t: float) -> "SimplicialSurface":
        return self.with_vertices(t * self.vertices)

    def edge_matrices(self, cells: Optional[np.ndarray] = None) -> np.ndarray:
        """(C, m, n) edge matrices with columns v_i - v_0."""
        C = self.cells if cells is None else cells
        base = self.vertices[C[:, 0]]
        return np.stack([self.vertices[C[:, i]] - base for i in range(1, C.shape[1])], axis=2)


def _permutation_parity(order: np.ndarray) -> np.ndarray:
    parity = np.ones(len(order), dtype=int)
    k = order.shape[1]
    for i in range(k):
        for j in range(i + 1, k):
            parity *= np.where(order[:, i] > order[:, j], -1, 1)
    return parity


def disjoint_union(a: SimplicialSurface, b: SimplicialSurface) -> SimplicialSurface:
    if a.ambient_dim != b.ambient_dim or a.dim != b.dim:
        raise SurfaceError("Surfaces must share ambient and intrinsic dimension")
    return SimplicialSurface(
        np.vstack([a.vertices, b.vertices]),
        np.vstack([a.cells, b.cells + len(a.vertices)]),
        np.concatenate([a.fixed, b.fixed]),
        a.weights,
        a.sphere,
    )


# Areas

@dataclass(frozen=True, eq=False)
class AreaBreakdown:
    densities: np.ndarray
    reference: float
    areas: np.ndarray
    total: float
    definition: str
    slivers: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "cell": np.arange(len(self.areas)),
            "density": self.densities,
            "reference": self.reference,
            "area": self.areas,
        })


class AreaCache:
    """Per-cell densities keyed by the edge matrix rounded to 1e-12."""

    def __init__(self, limit: int = 200_000):
        self.limit = limit
        self._store: Dict[Tuple[str, bytes], float] = {}
        self._lock = threading.Lock()

    def get(self, definition: str, V: np.ndarray, compute: Callable[[], float]) -> float:
        key = (definition, np.round(V, 12).tobytes())
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        value = compute()
        with self._lock:
            if len(self._store) >= self.limit:
                self._store.clear()
            self._store[key] = value
        return value


def is_degenerate(V: np.ndarray) -> bool:
    sv = np.linalg.svd(V, compute_uv=False)
    return bool(sv.size == 0 or sv[-1] <= DEGENERATE_TOL * max(1.0, sv[0]))


def _cell_density(V: np.ndarray, density: AreaDensity, cache: Optional[AreaCache]) -> Tuple[float, bool]:
    if is_degenerate(V):
        return 0.0, True

    def compute() -> float:
        return volume_density(induced_norm(V.shape[0], V), density)

    if cache is None:
        return compute(), False
    return cache.get(density.definition, V, compute), False


def cell_area(vertices, definition: Union[str, AreaDensity] = "loewner",
              cache: Optional[AreaCache] = None) -> float:
    """Finsler area of one simplex: density of the induced sup-norm times 1/n!.

    Degenerate cells have zero area.
    """
    verts = np.array([v.values if isinstance(v, EmbeddingVector) else v for v in vertices], dtype=float)
    if verts.ndim != 2 or len(verts) < 2:
        raise ArgumentError("A cell needs at least two vertices")
    n = len(verts) - 1
    V = (verts[1:] - verts[0]).T
    density, _ = _cell_density(V, AreaDensity.parse(definition), cache)
    return density / math.factorial(n)


def _cell_rows(surface: SimplicialSurface, idx: np.ndarray, density: AreaDensity,
               cache: Optional[AreaCache], threads: Optional[int]) -> List[Tuple[float, bool]]:
    E = surface.edge_matrices(surface.cells[idx])
    return parallel_map(lambda V: _cell_density(V, density, cache), list(E), threads)


def surface_area(surface: SimplicialSurface, definition: Union[str, AreaDensity] = "loewner",
                 cache: Optional[AreaCache] = None, threads: Optional[int] = None) -> AreaBreakdown:
    """Sum of cell areas in cell order."""
    density = AreaDensity.parse(definition)
    rows = _cell_rows(surface, np.arange(len(surface.cells)), density, cache, threads)
    ref = 1.0 / math.factorial(surface.dim)
    dens = np.array([d for d, _ in rows])
    areas = dens * ref
    return AreaBreakdown(dens, ref, areas, math.fsum(areas), density.definition, int(sum(s for _, s in rows)))


def euclidean_area(surface: SimplicialSurface, vertices: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """<,>_e-area and its gradient with respect to every vertex coordinate.

    Each cell contributes sqrt(det G) / n! with G = V^T diag(n w) V.
    """
    X = surface.vertices if vertices is None else vertices
    C = surface.cells
    n = surface.dim
    W = n * surface.weights
    base = X[C[:, 0]]
    E = np.stack([X[C[:, i]] - base for i in range(1, n + 1)], axis=2)
    WE = W[None, :, None] * E
    G = np.einsum("cki,ckj->cij", E, WE)
    det = np.linalg.det(G)
    good = det > (DEGENERATE_TOL ** 2) * np.maximum(1.0, np.einsum("cii->c", G)) ** n
    root = np.sqrt(np.where(good, det, 0.0))
    fact = math.factorial(n)
    area = math.fsum(root / fact)
    grad = np.zeros_like(X)
    if good.any():
        Ginv = np.linalg.inv(G[good])
        gE = root[good, None, None] * np.einsum("ckj,cji->cki", WE[good], Ginv) / fact
        cells = C[good]
        for i in range(1, n + 1):
            np.add.at(grad, cells[:, i], gE[:, :, i - 1])
            np.add.at(grad, cells[:, 0], -gE[:, :, i - 1])
    return area, grad


def sliver_count(surface: SimplicialSurface) -> int:
    return int(sum(is_degenerate(V) for V in surface.edge_matrices()))


# Builders

def flat_disc_surface(radius: float, mesh_cells: int, sphere: SampledSphere) -> SimplicialSurface:
    """Phi_0 image of a triangulated disc; boundary vertices fixed."""
    mesh = disc_mesh(radius, mesh_cells, sphere.ambient)
    return mesh_surface(mesh, mesh.points @ sphere.nodes.T, sphere)


def mesh_surface(mesh: PlanarMesh, values: np.ndarray, sphere: Optional[SampledSphere] = None,
                 weights: Optional[np.ndarray] = None, meta: Optional[Dict] = None) -> SimplicialSurface:
    return SimplicialSurface(values, mesh.cells, mesh.boundary.copy(), weights, sphere, dict(meta or {}))


def embed_filling(fld: MetricField, mesh: PlanarMesh, embed: str = "busemann_euclidean",
                  sphere: Optional[SampledSphere] = None, boundary_nodes=None,
                  threads: Optional[int] = None) -> SimplicialSurface:
    """Embed the mesh nodes through a representation of (D, g).

    The Riemannian volume of (D, g) is recorded in meta["riemannian_volume"].
    """
    if mesh.dim != fld.dim:
        raise ArgumentError(f"Mesh dimension {mesh.dim} differs from the field dimension {fld.dim}")
    values = embed_points(fld, mesh.points, embed, sphere, boundary_nodes, threads)
    meta = {"representation": embed, "riemannian_volume": riemannian_volume(fld)}
    if embed == "bdr":
        return mesh_surface(mesh, values, weights=np.full(values.shape[1], 1.0 / values.shape[1]), meta=meta)
    return mesh_surface(mesh, values, sphere, meta=meta)


def project_surface_flat(surface: SimplicialSurface) -> SimplicialSurface:
    """Apply Phi_0 o project_flat to every vertex."""
    sphere = surface.sphere
    if sphere is None:
        raise SurfaceError("Flat projection needs a surface indexed by sphere nodes")
    X = sphere.ambient * (surface.vertices * sphere.weights) @ sphere.nodes
    return surface.with_vertices(X @ sphere.nodes.T)


def jitter_surface(surface: SimplicialSurface, amplitude: float, seed: int) -> SimplicialSurface:
    """Move each free vertex by a seeded vector of <,>_e-length amplitude."""
    rng = np.random.default_rng(seed)
    X = surface.vertices.copy()
    scale = 1.0 / np.sqrt(surface.dim * surface.weights)
    for i in surface.free:
        z = rng.normal(size=surface.ambient_dim)
        X[i] += amplitude * scale * z / np.linalg.norm(z)
    return surface.with_vertices(X)


def harmonic_extension(points: np.ndarray, cells: np.ndarray, fixed: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Graph-Laplacian extension of the fixed rows of values to the free rows."""
    edges = _edges(cells)
    N = len(points)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    A = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N)).tocsr()
    deg = np.asarray(A.sum(axis=1)).reshape(-1)
    free = np.flatnonzero(~fixed)
    out = np.array(values, dtype=float)
    if not len(free):
        return out
    fixed_idx = np.flatnonzero(fixed)
    L_ff = (coo_matrix((deg[free], (np.arange(len(free)), np.arange(len(free)))), shape=(len(free),) * 2).tocsr()
            - A[free][:, free])
    rhs = A[free][:, fixed_idx] @ out[fixed_idx]
    sol = spsolve(L_ff.tocsc(), rhs)
    out[free] = np.asarray(sol).reshape(len(free), -1)
    return out


def remesh_start(surface: SimplicialSurface, mesh: PlanarMesh, seed: int, amplitude: float = 0.3) -> SimplicialSurface:
    """Competitor with the boundary of surface on a jittered re-triangulation.

    Free vertices are the harmonic extension of the boundary values, so the
    competitor does not see the interior of the original representation.
    """
    if len(mesh.points) != len(surface.vertices) or not np.array_equal(mesh.boundary, surface.fixed):
        raise SurfaceError("Mesh and surface vertices do not correspond")
    moved = jitter_mesh(mesh, amplitude, seed)
    values = harmonic_extension(moved.points, moved.cells, moved.boundary, surface.vertices)
    meta = dict(surface.meta, start="remesh", start_seed=seed)
    return SimplicialSurface(values, moved.cells, moved.boundary.copy(), surface.weights, surface.sphere, meta)


# Optimizer

@dataclass(frozen=True)
class OptimizerConfig:
    iterations: int = 200
    levels: int = 8
    factor: float = 0.5
    initial_step: Optional[float] = None
    random_directions: int = 2
    surrogate: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ArgumentError(f"Optimizer iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.factor < 1.0:
            raise ArgumentError(f"Step factor must lie in (0, 1), got {self.factor}")


class _LocalArea:
    """Current true cell areas with incremental updates around one vertex."""

    def __init__(self, surface: SimplicialSurface, density: AreaDensity, cache: AreaCache, threads: Optional[int]):
        self.surface = surface
        self.density = density
        self.cache = cache
        self.ref = 1.0 / math.factorial(surface.dim)
        rows = _cell_rows(surface, np.arange(len(surface.cells)), density, cache, threads)
        self.areas = np.array([d for d, _ in rows]) * self.ref
        self.degenerate = np.array([s for _, s in rows], dtype=bool)
        incident: List[List[int]] = [[] for _ in range(len(surface.vertices))]
        for c, cell in enumerate(surface.cells):
            for v in cell:
                incident[v].append(c)
        self.incident = [np.array(c, dtype=int) for c in incident]

    @property
    def total(self) -> float:
        return math.fsum(self.areas)

    @property
    def slivers(self) -> int:
        return int(self.degenerate.sum())

    def trial(self, i: int, position: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        cells = self.incident[i]
        saved = self.surface.vertices[i].copy()
        self.surface.vertices[i] = position
        E = self.surface.edge_matrices(self.surface.cells[cells])
        self.surface.vertices[i] = saved
        rows = [_cell_density(V, self.density, self.cache) for V in E]
        return cells, np.array([d for d, _ in rows]) * self.ref, np.array([s for _, s in rows], dtype=bool)


def minimize_filling(surface: SimplicialSurface, definition: Union[str, AreaDensity] = "loewner",
                     config: Optional[OptimizerConfig] = None, seed: int = 0,
                     threads: Optional[int] = None) -> Tuple[SimplicialSurface, pd.DataFrame]:
    """Reduce the area of surface by moving free vertices; boundary stays fixed.

    Phase A runs L-BFGS on the <,>_e-area, which bounds the Loewner area from
    below; its result is kept only if the true area did not grow. Phase B
    polishes the true area by per-vertex direct search on a geometric step
    schedule. The trace holds one row per accepted state.
    """
    cfg = config or OptimizerConfig()
    density = AreaDensity.parse(definition)
    log = get_logger()
    work = surface.with_vertices(surface.vertices.copy())
    cache = AreaCache()
    local = _LocalArea(work, density, cache, threads)
    trace = [{"iteration": 0, "phase": "start", "area": local.total, "step": 0.0, "slivers": local.slivers}]
    free = work.free
    if not len(free):
        return work, pd.DataFrame(trace)

    it = 0
    if cfg.surrogate:
        it += 1
        shape = (len(free), work.ambient_dim)

        def objective(flat: np.ndarray):
            X = work.vertices.copy()
            X[free] = flat.reshape(shape)
            area, grad = euclidean_area(work, X)
            return area, grad[free].reshape(-1)

        result = minimize(objective, work.vertices[free].reshape(-1), jac=True, method="L-BFGS-B",
                          options={"maxiter": cfg.iterations})
        candidate = work.vertices.copy()
        candidate[free] = result.x.reshape(shape)
        trial = _LocalArea(work.with_vertices(candidate), density, cache, threads)
        step = 0.0
        if trial.total <= local.total:
            step = float(np.linalg.norm(candidate - work.vertices))
            work, local = trial.surface, trial
        log.debug(f"Surrogate phase: {result.nit} iterations, true area {trial.total:.10g}")
        trace.append({"iteration": it, "phase": "surrogate", "area": local.total, "step": step,
                      "slivers": local.slivers})

    scale = 1.0 / np.sqrt(work.dim * work.weights)
    h = cfg.initial_step if cfg.initial_step is not None else 0.25 * _median_edge_e(work)
    rng = derived_rng(seed, 0)
    for level in range(cfg.levels):
        _, grad = euclidean_area(work)
        accepted = 0
        for i in free:
            directions = [-grad[i], _umbrella(work, local, i)]
            directions += [scale * rng.normal(size=work.ambient_dim) for _ in range(cfg.random_directions)]
            for d in directions:
                length = math.sqrt(work.dim * float(np.sum(work.weights * d * d)))
                if length <= 0.0:
                    continue
                d = d / length
                for sign in (1.0, -1.0):
                    cells, areas, degenerate = local.trial(i, work.vertices[i] + sign * h * d)
                    before = math.fsum(local.areas[cells])
                    if math.fsum(areas) < before - 1e-12 * max(before, 1e-300):
                        work.vertices[i] += sign * h * d
                        local.areas[cells] = areas
                        local.degenerate[cells] = degenerate
                        accepted += 1
                        break
        it += 1
        trace.append({"iteration": it, "phase": "polish", "area": local.total, "step": h, "slivers": local.slivers})
        log.debug(f"Polish level {level}: step {h:.3e}, {accepted} moves, area {local.total:.10g}")
        h *= cfg.factor
    return work, pd.DataFrame(trace)


def _median_edge_e(surface: SimplicialSurface) -> float:
    edges = _edges(surface.cells)
    d = surface.vertices[edges[:, 0]] - surface.vertices[edges[:, 1]]
    lengths = np.sqrt(surface.dim * np.einsum("ek,k,ek->e", d, surface.weights, d))
    return float(np.median(lengths)) if len(lengths) else 1.0


def _umbrella(surface: SimplicialSurface, local: _LocalArea, i: int) -> np.ndarray:
    nbrs = np.unique(surface.cells[local.incident[i]])
    nbrs = nbrs[nbrs != i]
    if not len(nbrs):
        return np.zeros(surface.ambient_dim)
    return surface.vertices[nbrs].mean(axis=0) - surface.vertices[i]


# Serialization

def surface_to_dict(surface: SimplicialSurface) -> Dict:
    return {
        "m": surface.ambient_dim,
        "vertices": surface.vertices.tolist(),
        "cells": surface.cells.tolist(),
        "fixed": surface.fixed.tolist(),
        "weights": surface.weights.tolist(),
        "meta": surface.meta,
    }


def surface_from_dict(data: Dict, sphere: Optional[SampledSphere] = None) -> SimplicialSurface:
    if not isinstance(data, dict):
        raise ConfigError("Surface JSON must be an object")
    unknown = set(data) - {"m", "vertices", "cells", "fixed", "weights", "meta"}
    if unknown:
        raise ConfigError(f"Unknown surface keys: {sorted(unknown)}")
    try:
        V = np.array(data["vertices"], dtype=float)
        m = int(data["m"])
        surface = SimplicialSurface(V, np.array(data["cells"], dtype=int), np.array(data["fixed"], dtype=bool),
                                    data.get("weights"), sphere, dict(data.get("meta") or {}))
    except SurfaceError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed surface JSON: {e}")
    if surface.ambient_dim != m:
        raise ConfigError(f"Surface declares m = {m} but vertices have {surface.ambient_dim} coordinates")
    return surface


def save_surface(surface: SimplicialSurface, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(surface_to_dict(surface), indent=2), encoding="utf-8")
    return path


def load_surface(path: Union[str, Path], sphere: Optional[SampledSphere] = None) -> SimplicialSurface:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read surface from {path}: {e}")
    return surface_from_dict(data, sphere)
