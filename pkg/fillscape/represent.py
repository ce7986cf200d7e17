"""Distance-preserving maps into the sampled L-infinity space of a sphere.

Coordinates are indexed by the nodes of a SampledSphere (or by boundary
nodes for the boundary distance representation). The weighted scalar
product <u, v>_e = n * sum_k w_k u_k v_k agrees with the Euclidean one on
the flat image W = Phi_0(R^n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import get_config
from .errors import (
    ArgumentError,
    ChartError,
    ConfigError,
    ConvergenceError,
    DivergenceError,
    UnsupportedDimensionError,
)
from .logger import get_logger
from .metricfield import MetricField, boundary_points, distances_from, fibonacci_sphere
from .parallel import derived_rng, parallel_map

EMBEDDINGS = ("bdr", "busemann_euclidean", "hyperbolic", "hyperplane")

# Newton decreases below this multiple of eps * |F| are not resolved by F
_ROUNDING = 64 * np.finfo(float).eps


# Sphere quadrature

@dataclass(frozen=True, eq=False)
class SampledSphere:
    """Nodes s_k on S^{n-1} with positive weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.array(self.nodes, dtype=float)
        w = np.array(self.weights, dtype=float)
        if s.ndim != 2 or s.shape[1] not in (2, 3) or len(w) != len(s):
            raise ArgumentError(f"Sphere nodes must be m x 2 or m x 3 with m weights, got {s.shape} and {w.shape}")
        if not np.allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-9):
            raise ArgumentError("Sphere nodes must be unit vectors")
        if np.any(w <= 0):
            raise ArgumentError("Sphere weights must be positive")
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        w = w / w.sum()
        s.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "nodes", s)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        """Dimension n - 1 of the sphere."""
        return self.nodes.shape[1] - 1

    @property
    def ambient(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def total_measure(self) -> float:
        """Standard measure |S^{n-1}|."""
        return 2 * math.pi if self.ambient == 2 else 4 * math.pi

    @cached_property
    def frame(self) -> np.ndarray:
        """Rows e_k / sqrt(n w_k): an orthonormal basis for <,>_e."""
        return np.diag(1.0 / np.sqrt(self.ambient * self.weights))

    @classmethod
    def circle(cls, m: int) -> "SampledSphere":
        if m < 3:
            raise ArgumentError(f"A circle quadrature needs m >= 3 nodes, got {m}")
        theta = 2 * math.pi * np.arange(m) / m
        return cls(np.column_stack([np.cos(theta), np.sin(theta)]), np.full(m, 1.0 / m))

    @classmethod
    def sphere2(cls, m: int) -> "SampledSphere":
        """Antipodally symmetric Fibonacci nodes with weights corrected for exact second moments."""
        if m < 12 or m % 2:
            raise ArgumentError(f"S^2 quadrature needs an even m >= 12, got {m}")
        half = fibonacci_sphere(m // 2)
        s = np.vstack([half, -half])
        w0 = np.full(m, 1.0 / m)
        pairs = [(i, j) for i in range(3) for j in range(i, 3)]
        A = np.array([s[:, i] * s[:, j] for i, j in pairs])
        b = np.array([1.0 / 3.0 if i == j else 0.0 for i, j in pairs])
        w = w0 + A.T @ np.linalg.solve(A @ A.T, b - A @ w0)
        if np.any(w <= 0):
            raise ArgumentError("Second-moment correction produced nonpositive weights")
        return cls(s, w)

    @classmethod
    def for_dim(cls, n: int, m: int) -> "SampledSphere":
        if n == 2:
            return cls.circle(m)
        if n == 3:
            return cls.sphere2(m)
        raise UnsupportedDimensionError(f"Sampled spheres are provided for n = 2, 3; got {n}")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "SampledSphere":
        """Rows of unit-vector components followed by a weight column named 'w'."""
        try:
            frame = pd.read_csv(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"Cannot read sphere nodes from {path}: {e}")
        if "w" not in frame.columns:
            raise ConfigError(f"Sphere CSV {path} needs a 'w' weight column")
        coords = frame.drop(columns=["w"]).to_numpy(dtype=float)
        return cls(coords, frame["w"].to_numpy(dtype=float))

    def to_frame(self) -> pd.DataFrame:
        cols = {f"s{i + 1}": self.nodes[:, i] for i in range(self.ambient)}
        cols["w"] = self.weights
        return pd.DataFrame(cols)

    def moment_error(self) -> float:
        """max |n sum_k w_k s_ki s_kj - delta_ij|."""
        M = self.ambient * (self.nodes.T * self.weights) @ self.nodes
        return float(np.abs(M - np.eye(self.ambient)).max())

    def max_gap(self) -> float:
        """Covering radius of the nodes (angle), estimated on a dense probe set."""
        probe = SampledSphere.circle(4096).nodes if self.ambient == 2 else fibonacci_sphere(8192)
        cos = np.clip((probe @ self.nodes.T).max(axis=1), -1.0, 1.0)
        return float(np.arccos(cos).max())


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A point of the sampled L-infinity space."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if len(self.values) else 0.0

    def __len__(self) -> int:
        return len(self.values)

    def __add__(self, other: "EmbeddingVector") -> "EmbeddingVector":
        return EmbeddingVector(self.values + _values(other))

    def __sub__(self, other: "EmbeddingVector") -> "EmbeddingVector":
        return EmbeddingVector(self.values - _values(other))

    def __mul__(self, t: float) -> "EmbeddingVector":
        return EmbeddingVector(self.values * t)

    __rmul__ = __mul__

    def __neg__(self) -> "EmbeddingVector":
        return EmbeddingVector(-self.values)


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, EmbeddingVector) else np.asarray(u, dtype=float)


def _check_nodes(u: np.ndarray, sphere: SampledSphere):
    if u.shape[-1] != sphere.size:
        raise ArgumentError(f"Vector has {u.shape[-1]} coordinates, sphere has {sphere.size} nodes")


# Representations

def busemann_embed_euclidean(x, sphere: SampledSphere) -> EmbeddingVector:
    x = np.asarray(x, dtype=float)
    if x.shape != (sphere.ambient,):
        raise ArgumentError(f"Point must have dimension {sphere.ambient}")
    return EmbeddingVector(sphere.nodes @ x)


def hyperbolic_busemann(x: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """B_s(x) = ln(|x - s|^2 / (1 - |x|^2)) for rays from the origin; batched over x."""
    x = np.atleast_2d(x)
    r2 = np.einsum("bi,bi->b", x, x)
    diff2 = r2[:, None] - 2.0 * x @ nodes.T + 1.0
    return np.log(diff2) - np.log(1.0 - r2)[:, None]


def busemann_embed_hyperbolic(x, sphere: SampledSphere) -> EmbeddingVector:
    """Busemann coordinates of a point of the Poincare ball."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sphere.ambient,):
        raise ArgumentError(f"Point must have dimension {sphere.ambient}")
    if float(x @ x) >= 1.0:
        raise ChartError(f"Point {x.tolist()} lies outside the Poincare chart")
    return EmbeddingVector(hyperbolic_busemann(x, sphere.nodes)[0])


def hyperbolic_distance(x, y) -> float:
    """Poincare-ball distance arcosh(1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2)))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax, ay = float(x @ x), float(y @ y)
    if ax >= 1.0 or ay >= 1.0:
        raise ChartError("Points must lie inside the Poincare chart")
    d2 = float((x - y) @ (x - y))
    return float(np.arccosh(1.0 + 2.0 * d2 / ((1.0 - ax) * (1.0 - ay))))


def _resolve_boundary(fld: MetricField, boundary_nodes) -> np.ndarray:
    if isinstance(boundary_nodes, (int, np.integer)):
        return boundary_points(fld, int(boundary_nodes))[0]
    nodes = np.atleast_2d(np.asarray(boundary_nodes, dtype=float))
    if nodes.shape[1] != fld.dim:
        raise ArgumentError(f"Boundary nodes must have dimension {fld.dim}")
    return nodes


def bdr_embed(fld: MetricField, x, boundary_nodes) -> EmbeddingVector:
    """Boundary distance representation: coordinate k = d_g(x, b_k).

    The field is expected to be simple (see simplicity_check); the check
    is left to the caller because it dominates the cost.
    """
    nodes = _resolve_boundary(fld, boundary_nodes)
    lengths, _ = distances_from(fld, x, nodes)
    return EmbeddingVector(lengths)


def hyperplane_embed(fld: MetricField, x, sphere: SampledSphere, boundary_nodes) -> EmbeddingVector:
    """Signed g-distances from x to the far hyperplanes <y, s_k> = -R_out.

    g is continued by the Euclidean metric outside the disc, so a
    shortest path leaves through some boundary node b and runs straight to
    the hyperplane: coordinate k = min_b (d_g(x, b) + <b, s_k>), with the
    constant R_out removed. For the Euclidean metric this is Phi_0(x).
    """
    if sphere.ambient != fld.dim:
        raise ArgumentError("Sphere and field dimensions differ")
    nodes = _resolve_boundary(fld, boundary_nodes)
    lengths, _ = distances_from(fld, x, nodes)
    return EmbeddingVector(_hyperplane_values(lengths, nodes, sphere))


def _hyperplane_values(lengths: np.ndarray, nodes: np.ndarray, sphere: SampledSphere) -> np.ndarray:
    return np.min(lengths[:, None] + nodes @ sphere.nodes.T, axis=0)


def embed_points(fld: MetricField, points, kind: str, sphere: Optional[SampledSphere] = None,
                 boundary_nodes=None, threads: Optional[int] = None) -> np.ndarray:
    """Embed a batch of chart points; returns an (N, m) array of coordinates."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if kind not in EMBEDDINGS:
        raise ArgumentError(f"Unknown representation {kind!r}; expected one of {EMBEDDINGS}")
    if kind in ("busemann_euclidean", "hyperbolic", "hyperplane") and sphere is None:
        raise ArgumentError(f"Representation {kind!r} needs a sampled sphere")
    if kind == "busemann_euclidean":
        return pts @ sphere.nodes.T
    if kind == "hyperbolic":
        if np.any(np.einsum("bi,bi->b", pts, pts) >= 1.0):
            raise ChartError("Points must lie inside the Poincare chart")
        return hyperbolic_busemann(pts, sphere.nodes)
    nodes = _resolve_boundary(fld, boundary_nodes if boundary_nodes is not None else 64)
    rows = parallel_map(lambda x: distances_from(fld, x, nodes)[0], list(pts), threads)
    lengths = np.array(rows)
    if kind == "bdr":
        return lengths
    return np.array([_hyperplane_values(row, nodes, sphere) for row in lengths])


def embeddings_to_frame(points, vectors) -> pd.DataFrame:
    """One row per point: chart coordinates then one column per node."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.atleast_2d(np.asarray([_values(v) for v in vectors] if not isinstance(vectors, np.ndarray) else vectors))
    cols = {f"x{i + 1}": pts[:, i] for i in range(pts.shape[1])}
    cols.update({f"u{k}": vals[:, k] for k in range(vals.shape[1])})
    return pd.DataFrame(cols)


def gradient_map_degree(embed: Callable[[np.ndarray], np.ndarray], x, sphere: SampledSphere,
                        h: float = 1e-4) -> int:
    """Winding number of s_k -> grad Phi_k(x) around the unit circle.

    Gradients are central differences of the representation at x; the
    nodes are traversed in angular order.
    """
    if sphere.ambient != 2:
        raise UnsupportedDimensionError("The gradient degree is computed for planar representations")
    x = np.asarray(x, dtype=float)
    grads = np.empty((sphere.size, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        grads[:, i] = (np.asarray(embed(x + e)) - np.asarray(embed(x - e))) / (2 * h)
    order = np.argsort(np.arctan2(sphere.nodes[:, 1], sphere.nodes[:, 0]))
    angles = np.arctan2(grads[order, 1], grads[order, 0])
    steps = np.diff(np.concatenate([angles, angles[:1]]))
    steps = (steps + math.pi) % (2 * math.pi) - math.pi
    return int(round(steps.sum() / (2 * math.pi)))


# Scalar product and flat projection

def scalar_product_e(u, v, sphere: SampledSphere) -> float:
    a, b = _values(u), _values(v)
    _check_nodes(a, sphere)
    _check_nodes(b, sphere)
    return float(sphere.ambient * np.sum(sphere.weights * a * b))


def norm_e(u, sphere: SampledSphere) -> float:
    return math.sqrt(max(scalar_product_e(u, u, sphere), 0.0))


def project_flat(u, sphere: SampledSphere) -> np.ndarray:
    """x with x_i = n sum_k w_k u_k s_ki; Phi_0 o project_flat is the <,>_e-orthogonal projection onto W."""
    a = _values(u)
    _check_nodes(a, sphere)
    return sphere.ambient * (a * sphere.weights) @ sphere.nodes


def shrinking_projection(U: np.ndarray, sphere: SampledSphere, lam: float) -> np.ndarray:
    """P_lam(u) = x / (1 + lam r^2), x = project_flat(u), r = ||u - Phi_0(x)||_e; batched over rows."""
    n = sphere.ambient
    X = n * (U * sphere.weights) @ sphere.nodes
    R = U - X @ sphere.nodes.T
    r2 = n * np.einsum("bk,bk,k->b", R, R, sphere.weights)
    return X / (1.0 + lam * r2)[:, None]


def shrinking_jacobian(u, sphere: SampledSphere, lam: float, h: float = 1e-6) -> Tuple[float, float]:
    """n-Jacobian of P_lam at u and the squared residual ||u - Phi_0 P(u)||_e^2.

    The Jacobian is sqrt(det(D D^T)) for the derivative D taken over an
    <,>_e-orthonormal frame, which is the largest Jacobian over all n-planes.
    """
    a = _values(u)
    _check_nodes(a, sphere)
    n = sphere.ambient
    frame = sphere.frame
    plus = shrinking_projection(a[None, :] + h * frame, sphere, lam)
    minus = shrinking_projection(a[None, :] - h * frame, sphere, lam)
    D = ((plus - minus) / (2 * h)).T
    jac = math.sqrt(max(np.linalg.det(D @ D.T), 0.0))
    x = project_flat(a, sphere)
    resid = a - sphere.nodes @ x
    return jac, float(n * np.sum(sphere.weights * resid * resid))


@dataclass(frozen=True, eq=False)
class JacobianFitReport:
    samples: np.ndarray
    jacobians: np.ndarray
    residuals_sq: np.ndarray
    fitted_c: float
    violations: int
    lam: float
    radius: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "sample": np.arange(len(self.jacobians)),
            "jacobian": self.jacobians,
            "residual_sq": self.residuals_sq,
            "norm_e": np.sqrt(np.maximum(self.residuals_sq, 0.0)),
        })


def jacobian_bound_probe(sphere: SampledSphere, samples: int = 100, radius: float = 10.0, seed: int = 0,
                         lam: Optional[float] = None, slack: float = 1e-7,
                         threads: Optional[int] = None) -> JacobianFitReport:
    """Fit the largest c with J_n P(u) <= 1 - c ||u - P(u)||_e^2 on seeded u.

    u is drawn uniformly from the <,>_e-ball of the given radius. The
    default shrinking rate lam = n / (4 radius^2) keeps J <= 1 on that ball.
    """
    if samples < 10:
        raise ArgumentError(f"jacobian_bound_probe needs samples >= 10, got {samples}")
    if radius <= 0:
        raise ArgumentError(f"Probe radius must be positive, got {radius}")
    n, m = sphere.ambient, sphere.size
    lam = n / (4.0 * radius ** 2) if lam is None else float(lam)
    frame = sphere.frame

    def draw(i: int):
        rng = derived_rng(seed, i)
        z = rng.normal(size=m)
        z *= radius * rng.uniform() ** (1.0 / m) / np.linalg.norm(z)
        u = z @ frame
        return u, shrinking_jacobian(u, sphere, lam)

    results = parallel_map(draw, range(samples), threads)
    U = np.array([u for u, _ in results])
    J = np.array([j for _, (j, _) in results])
    r2 = np.array([r for _, (_, r) in results])
    positive = r2 > 1e-14
    fitted = float(np.min((1.0 - J[positive]) / r2[positive])) if positive.any() else math.inf
    violations = int(np.sum(J > 1.0 + slack))
    get_logger().debug(f"Jacobian probe: lam={lam:.4g} fitted_c={fitted:.4g} violations={violations}")
    return JacobianFitReport(U, J, r2, fitted, violations, lam, radius)


# Hyperbolic projection

def _weights_for(phi: np.ndarray, sphere: SampledSphere) -> np.ndarray:
    z = -sphere.ambient * phi
    a = sphere.weights * sphere.total_measure * np.exp(z - z.max())
    return a / a.sum()


def project_hyperbolic_closed_form(phi, sphere: SampledSphere) -> np.ndarray:
    """Minimizer of the discretized F_phi in closed form.

    With a_k proportional to w_k exp(-n phi_k), A = sum a_k and M = sum a_k s_k,
    the minimizer is rho M/|M| with rho = (A - sqrt(A^2 - |M|^2)) / |M|.
    """
    a = _weights_for(_values(phi), sphere)
    A = a.sum()
    M = a @ sphere.nodes
    mu = float(np.linalg.norm(M))
    if mu < 1e-300:
        return np.zeros(sphere.ambient)
    rho = (A - math.sqrt(max(A * A - mu * mu, 0.0))) / mu
    return rho * M / mu


def _f_phi(x: np.ndarray, a: np.ndarray, nodes: np.ndarray) -> float:
    r2 = float(x @ x)
    if r2 >= 1.0:
        return math.inf
    return float(a @ np.sum((x - nodes) ** 2, axis=1)) / (1.0 - r2)


def project_hyperbolic(phi, sphere: SampledSphere, tol: Optional[float] = None,
                       max_iter: int = 100) -> np.ndarray:
    """argmin over the Poincare ball of F(x) = sum_k a_k exp(B_{s_k}(x)).

    a_k = w_k |S| exp(-n phi_k), rescaled to sum to one (the argmin is
    unchanged). Damped Newton from the origin with Armijo backtracking,
    switching to full steps once the predicted decrease is below the
    rounding of F. Returns once |grad F| <= tol.
    """
    tol = get_config().tol if tol is None else tol
    if tol <= 0:
        raise ArgumentError(f"Tolerance must be positive, got {tol}")
    phi = _values(phi)
    _check_nodes(phi, sphere)
    if not np.all(np.isfinite(phi)):
        raise ArgumentError("phi must be finite")
    a = _weights_for(phi, sphere)
    nodes = sphere.nodes
    n = sphere.ambient
    A = a.sum()
    M = a @ nodes
    limit = 1.0 - get_config().collar

    x = np.zeros(n)
    F = _f_phi(x, a, nodes)
    for it in range(max_iter):
        D = 1.0 - x @ x
        grad = (2.0 * (A * x - M) + 2.0 * F * x) / D
        if np.linalg.norm(grad) <= tol:
            return x
        hess = (2.0 * (A + F) * np.eye(n) + 2.0 * (np.outer(x, grad) + np.outer(grad, x))) / D
        try:
            np.linalg.cholesky(hess)
            direction = -np.linalg.solve(hess, grad)
            newton = True
        except np.linalg.LinAlgError:
            direction = -grad
            newton = False
        slope = float(grad @ direction)
        if newton and -slope <= _ROUNDING * (1.0 + abs(F)):
            # predicted decrease is below the rounding of F: take the full step
            trial, t = x + direction, 1.0
            Ft = _f_phi(trial, a, nodes)
        else:
            t = 1.0
            while True:
                trial = x + t * direction
                Ft = _f_phi(trial, a, nodes)
                if Ft <= F + 1e-4 * t * slope:
                    break
                t *= 0.5
                if t < 1e-16:
                    break
        if t < 1e-16:
            # no representable descent left; accept the current point
            if np.linalg.norm(grad) <= max(tol, 1e3 * np.finfo(float).eps * (1.0 + abs(F))):
                return x
            raise ConvergenceError(f"Line search stalled with |grad F| = {np.linalg.norm(grad):.3e}", last_iterate=x)
        x, F = trial, Ft
        if float(np.linalg.norm(x)) >= limit:
            raise DivergenceError(f"Hyperbolic projection iterate reached |x| = {np.linalg.norm(x):.6f}")
    raise ConvergenceError(f"Hyperbolic projection did not converge in {max_iter} iterations", last_iterate=x)
