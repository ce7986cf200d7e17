"""Finite-dimensional Banach norms, John ellipsoids, polar bodies and
Finsler volume densities.

A norm is given either in closed form (euclidean, lp) or as a symmetric
polytope {x : |a_k . x| <= 1 for all k}. Every density is reported as the
factor sigma such that the Finsler volume element equals sigma times the
Lebesgue measure in the coordinates where the given ball is the unit ball.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .config import get_config
from .errors import (
    ArgumentError,
    ConfigError,
    ConvergenceError,
    DegenerateTangentError,
    UnboundedBallError,
    UnsupportedDimensionError,
)
from .logger import get_logger

KINDS = ("euclidean", "lp", "polytope")
DENSITIES = ("busemann", "holmes_thompson", "loewner", "benson")

# Largest number of candidate facet tuples examined by the Benson search
_BENSON_MAX_TUPLES = 200_000
# John ellipsoid gap below which Newton steps replace first-order ones
_NEWTON_GAP = 1e-3


def omega(n: int) -> float:
    """Volume of the Euclidean unit ball in R^n."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ArgumentError(f"{name} must be a 2-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Norm:
    """A centrally symmetric norm on R^dim.

    kind == "euclidean": ||x||^2 = x^T A x with A = matrix (SPD).
    kind == "lp":        ||x|| = (sum |x_i|^p)^(1/p), p in [1, inf].
    kind == "polytope":  ||x|| = max_k |a_k . x| with a_k = facets[k].
    """

    dim: int
    kind: str
    matrix: Optional[np.ndarray] = None
    p: Optional[float] = None
    facets: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"Unknown norm kind: {self.kind!r}")
        if int(self.dim) < 1:
            raise ArgumentError(f"Norm dimension must be >= 1, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

        if self.kind == "euclidean":
            A = _as_matrix(self.matrix, "matrix")
            if A.shape != (self.dim, self.dim):
                raise ArgumentError(f"Euclidean matrix must be {self.dim}x{self.dim}, got {A.shape}")
            if not np.allclose(A, A.T, rtol=1e-12, atol=1e-14):
                raise ArgumentError("Euclidean matrix must be symmetric")
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError:
                raise ArgumentError("Euclidean matrix must be positive definite")
            object.__setattr__(self, "matrix", A)

        elif self.kind == "lp":
            if self.p is None or not (float(self.p) >= 1.0):
                raise ArgumentError(f"lp norm needs p >= 1, got {self.p}")
            object.__setattr__(self, "p", float(self.p))

        else:
            F = _as_matrix(self.facets, "facets")
            if F.shape[0] == 0 or F.shape[1] != self.dim:
                raise ArgumentError(f"Facets must be a nonempty k x {self.dim} array, got {F.shape}")
            scale = np.abs(F).max()
            if scale == 0.0 or np.linalg.matrix_rank(F, tol=1e-12 * scale) < self.dim:
                raise UnboundedBallError("Facet covectors do not span R^n; the unit ball is unbounded")
            keep = np.linalg.norm(F, axis=1) > 1e-15 * scale
            F = np.array(F[keep])
            F.setflags(write=False)
            object.__setattr__(self, "facets", F)

    # Constructors

    @classmethod
    def euclidean(cls, matrix) -> "Norm":
        A = np.array(matrix, dtype=float)
        return cls(dim=A.shape[0], kind="euclidean", matrix=A)

    @classmethod
    def lp(cls, dim: int, p: float) -> "Norm":
        return cls(dim=dim, kind="lp", p=p)

    @classmethod
    def polytope(cls, facets) -> "Norm":
        F = np.array(facets, dtype=float)
        if F.ndim != 2:
            raise ArgumentError(f"Facets must be a 2-D array, got shape {F.shape}")
        return cls(dim=F.shape[1], kind="polytope", facets=F)

    # Evaluation

    def __call__(self, x) -> Union[float, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ArgumentError(f"Vector of shape {x.shape} does not match norm dimension {self.dim}")
        if self.kind == "euclidean":
            val = np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", x, self.matrix, x), 0.0))
        elif self.kind == "lp":
            val = np.linalg.norm(x, ord=self.p, axis=-1) if self.dim > 0 else np.zeros(x.shape[:-1])
        else:
            val = np.abs(x @ self.facets.T).max(axis=-1)
        return float(val) if np.ndim(val) == 0 else val

    def dual(self, y) -> Union[float, np.ndarray]:
        """Support function of the unit ball: max over x in B of y . x."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.dim,):
            raise ArgumentError(f"Covector of shape {y.shape} does not match norm dimension {self.dim}")
        if self.kind == "euclidean":
            sol = np.linalg.solve(self.matrix, np.moveaxis(y, -1, 0).reshape(self.dim, -1))
            val = np.sqrt(np.maximum(np.einsum("ij,ij->j", np.moveaxis(y, -1, 0).reshape(self.dim, -1), sol), 0.0))
            val = val.reshape(y.shape[:-1])
        elif self.kind == "lp":
            q = math.inf if self.p == 1.0 else (1.0 if math.isinf(self.p) else self.p / (self.p - 1.0))
            val = np.linalg.norm(y, ord=q, axis=-1)
        else:
            val = np.abs(y @ self.vertices.T).max(axis=-1)
        return float(val) if np.ndim(val) == 0 else val

    def scaled(self, t: float) -> "Norm":
        """Norm whose unit ball is t times this one."""
        if t <= 0:
            raise ArgumentError(f"Scale factor must be positive, got {t}")
        if self.kind == "euclidean":
            return Norm.euclidean(self.matrix / t ** 2)
        if self.kind == "polytope":
            return Norm.polytope(self.facets / t)
        return Norm.polytope(polytope_approximation(self).facets / t)

    @cached_property
    def vertices(self) -> np.ndarray:
        """Vertices of a polytope unit ball."""
        if self.kind != "polytope":
            raise ArgumentError("Vertices are only defined for polytope norms")
        F = self.facets
        if self.dim == 1:
            r = 1.0 / np.abs(F).max()
            return np.array([[r], [-r]])
        halfspaces = np.vstack([
            np.hstack([F, -np.ones((len(F), 1))]),
            np.hstack([-F, -np.ones((len(F), 1))]),
        ])
        try:
            hs = HalfspaceIntersection(halfspaces, np.zeros(self.dim))
            pts = hs.intersections
            hull = ConvexHull(pts)
        except QhullError as e:
            raise UnboundedBallError(f"Halfspace intersection failed: {e}")
        verts = pts[hull.vertices]
        verts.setflags(write=False)
        return verts


# Norm plumbing

def norm_eval(norm: Norm, x) -> float:
    """||x|| for a single vector x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (norm.dim,):
        raise ArgumentError(f"Expected a vector of dimension {norm.dim}, got shape {x.shape}")
    return float(norm(x))


def _sample_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    if dim == 2:
        theta = np.pi * np.arange(count) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    pairs = dim * (dim - 1) // 2
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(count * pairs, dim))
    dirs = np.vstack([np.eye(dim), dirs])
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def polytope_approximation(norm: Norm, directions: Optional[int] = None) -> Norm:
    """Circumscribed polytope norm with facets sampled on the polar boundary.

    Polytope norms are returned unchanged; smooth norms get one facet per
    sampled direction u, namely u / h_B(u), which touches the ball.
    """
    if norm.kind == "polytope":
        return norm
    count = directions or get_config().sampling_directions
    dirs = _sample_directions(norm.dim, count)
    return Norm.polytope(dirs / np.asarray(norm.dual(dirs)).reshape(-1, 1))


def polar_norm(norm: Norm) -> Norm:
    """Norm whose unit ball is the polar body of the unit ball of norm."""
    if norm.kind == "euclidean":
        return Norm.euclidean(np.linalg.inv(norm.matrix))
    if norm.kind == "lp":
        p = norm.p
        q = math.inf if p == 1.0 else (1.0 if math.isinf(p) else p / (p - 1.0))
        return Norm.lp(norm.dim, q)
    return Norm.polytope(norm.vertices)


def restrict_norm(norm: Norm, basis) -> Norm:
    """Restriction of norm to span(basis columns), in basis coordinates."""
    U = np.asarray(basis, dtype=float)
    if U.ndim != 2 or U.shape[0] != norm.dim:
        raise ArgumentError(f"Basis must be {norm.dim} x k, got shape {U.shape}")
    if np.linalg.matrix_rank(U) < U.shape[1]:
        raise DegenerateTangentError("Restriction basis is rank deficient")
    if norm.kind == "euclidean":
        return Norm.euclidean(U.T @ norm.matrix @ U)
    return Norm.polytope(polytope_approximation(norm).facets @ U)


def induced_norm(ambient_dim: int, basis) -> Norm:
    """Restriction of the sup-norm of R^m to the column span of basis.

    The result lives on R^n in basis coordinates: its ball is
    {c : |V_k . c| <= 1 for every row V_k}.
    """
    V = np.asarray(basis, dtype=float)
    if V.ndim != 2 or V.shape[0] != ambient_dim:
        raise ArgumentError(f"Basis must be {ambient_dim} x n, got shape {V.shape}")
    n = V.shape[1]
    scale = np.abs(V).max() if V.size else 0.0
    if scale == 0.0 or np.linalg.matrix_rank(V, tol=1e-12 * scale) < n:
        raise DegenerateTangentError(f"Tangent basis of shape {V.shape} is rank deficient")
    return Norm.polytope(V)


# Volumes

def ball_volume(norm: Norm) -> float:
    """Lebesgue volume of the unit ball B."""
    n = norm.dim
    if norm.kind == "euclidean":
        return omega(n) / math.sqrt(np.linalg.det(norm.matrix))
    if norm.kind == "lp":
        if math.isinf(norm.p):
            return 2.0 ** n
        return (2.0 * math.gamma(1.0 + 1.0 / norm.p)) ** n / math.gamma(1.0 + n / norm.p)
    if n > get_config().max_dim:
        raise UnsupportedDimensionError(f"Polytope volumes are supported up to dimension 4, got {n}")
    if n == 1:
        return 2.0 / np.abs(norm.facets).max()
    return float(ConvexHull(norm.vertices).volume)


def polar_volume(norm: Norm) -> float:
    """Lebesgue volume of the polar body B° = {y : y . x <= 1 for x in B}."""
    n = norm.dim
    if n > get_config().max_dim:
        raise UnsupportedDimensionError(f"Polar volumes are supported up to dimension 4, got {n}")
    if norm.kind == "euclidean":
        return omega(n) * math.sqrt(np.linalg.det(norm.matrix))
    if norm.kind == "lp":
        return ball_volume(polar_norm(norm))
    F = norm.facets
    if n == 1:
        return 2.0 * np.abs(F).max()
    try:
        return float(ConvexHull(np.vstack([F, -F])).volume)
    except QhullError as e:
        raise UnboundedBallError(f"Polar hull failed: {e}")


def exact_polygon_area(points) -> float:
    """Area of the convex hull of 2-D points in exact rational arithmetic."""
    pts = np.asarray(points, dtype=float)
    hull = ConvexHull(pts)
    ring = [(Fraction(float(pts[i, 0])), Fraction(float(pts[i, 1]))) for i in hull.vertices]
    twice = Fraction(0)
    for (x0, y0), (x1, y1) in zip(ring, ring[1:] + ring[:1]):
        twice += x0 * y1 - x1 * y0
    return float(abs(twice) / 2)


# John ellipsoid

@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Centered ellipsoid {x : x^T Q x <= 1}."""

    shape: np.ndarray
    volume: float
    gap: float = 0.0
    iterations: int = 0

    @classmethod
    def from_shape(cls, Q, gap: float = 0.0, iterations: int = 0) -> "Ellipsoid":
        Q = np.array(Q, dtype=float)
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        n = Q.shape[0]
        return cls(shape=Q, volume=omega(n) / math.sqrt(np.linalg.det(Q)), gap=gap, iterations=iterations)

    @property
    def dim(self) -> int:
        return self.shape.shape[0]


def _moment(points: np.ndarray, u: np.ndarray) -> np.ndarray:
    return points.T @ (u[:, None] * points)


def _newton_weights(points: np.ndarray, u: np.ndarray, M: np.ndarray, g: np.ndarray) -> Optional[np.ndarray]:
    """One damped Newton step for log det M(u) on the active support.

    Returns the new weights, or None when the step does not increase
    log det M and the caller should fall back to a first-order step.
    """
    S = np.flatnonzero(u > 0.0)
    j = int(np.argmax(g))
    if j not in S:
        S = np.append(S, j)
    X = points[S]
    K = X @ np.linalg.solve(M, X.T)
    s = len(S)
    kkt = np.zeros((s + 1, s + 1))
    kkt[:s, :s] = K * K
    kkt[:s, s] = 1.0
    kkt[s, :s] = 1.0
    du = np.linalg.lstsq(kkt, np.append(g[S], 0.0), rcond=None)[0][:s]
    predicted = float(g[S] @ du)
    if not predicted > 0.0:
        return None
    shrinking = np.flatnonzero(du < 0.0)
    ratios = -u[S][shrinking] / du[shrinking]
    t_max = float(ratios.min()) if ratios.size else math.inf
    blocking = S[shrinking[np.argmin(ratios)]] if ratios.size else None
    _, base = np.linalg.slogdet(M)
    t = min(1.0, t_max)
    for _ in range(40):
        trial = u.copy()
        trial[S] += t * du
        if t == t_max:
            trial[blocking] = 0.0
        trial = np.maximum(trial, 0.0)
        trial /= trial.sum()
        # below rounding of log det the quadratic model is exact enough
        if t == 1.0 and predicted < 1e-10:
            return trial
        sign, value = np.linalg.slogdet(_moment(points, trial))
        # dropping a blocking point may leave log det unchanged up to rounding
        slack = 1e-13 * (1.0 + abs(base)) if t == t_max else 0.0
        if sign > 0 and value >= base + 1e-4 * t * predicted - slack:
            return trial
        t *= 0.5
    return None


def _centered_mvee(points: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, float, float, int]:
    """Minimum-volume centered ellipsoid around ±points.

    Khachiyan with away steps until the gap drops below 1e-3, then Newton
    steps on the active support, falling back to the first-order step
    whenever Newton makes no progress.

    Returns (M, g_max, gap, iterations) where the ellipsoid is
    {y : y^T M^{-1} y <= g_max} and gap = g_max / n - 1 certifies optimality.
    """
    k, n = points.shape
    u = np.full(k, 1.0 / k)
    M = _moment(points, u)
    for it in range(max_iter + 1):
        M = _moment(points, u)
        g = np.einsum("ij,ij->i", points, np.linalg.solve(M, points.T).T)
        j = int(np.argmax(g))
        g_max = float(g[j])
        gap = g_max / n - 1.0
        if gap <= tol:
            return M, g_max, gap, it
        if it == max_iter:
            break

        if gap <= _NEWTON_GAP:
            polished = _newton_weights(points, u, M, g)
            if polished is not None:
                u = polished
                continue

        active = np.flatnonzero(u > 0.0)
        i = int(active[np.argmin(g[active])])
        g_min = float(g[i])
        if n - g_min > g_max - n and u[i] < 1.0:
            # Away step: shrink the weight of the least useful support point
            floor = -u[i] / (1.0 - u[i])
            beta = floor if g_min <= 1.0 else max((g_min - n) / (n * (g_min - 1.0)), floor)
            u = (1.0 - beta) * u
            u[i] += beta
            if beta == floor:
                u[i] = 0.0
        else:
            beta = (g_max - n) / (n * (g_max - 1.0))
            u = (1.0 - beta) * u
            u[j] += beta
    raise ConvergenceError(
        f"John ellipsoid iteration cap {max_iter} reached with gap {gap:.3e}",
        last_iterate=Ellipsoid.from_shape(g_max * M, gap=gap, iterations=max_iter),
    )


def john_ellipsoid(norm: Norm, tol: Optional[float] = None, max_iter: Optional[int] = None) -> Ellipsoid:
    """Maximum-volume ellipsoid inscribed in the unit ball of norm.

    Computed in the polar picture: E is inscribed in B iff B° lies in E°,
    so E° is the minimum-volume centered ellipsoid around the facet
    covectors. The returned ellipsoid is strictly inscribed and its volume
    is within a factor (1 + gap)^(-n/2) of the optimum.
    """
    cfg = get_config()
    tol = cfg.john_tol if tol is None else tol
    max_iter = cfg.john_max_iter if max_iter is None else max_iter
    if tol <= 0:
        raise ArgumentError(f"John tolerance must be positive, got {tol}")
    if norm.kind == "euclidean":
        return Ellipsoid.from_shape(norm.matrix)
    poly = polytope_approximation(norm)
    M, g_max, gap, iterations = _centered_mvee(poly.facets, tol, max_iter)
    # E = {x : x^T (g_max M) x <= 1} satisfies |a_k . x| <= 1 for every facet
    return Ellipsoid.from_shape(g_max * M, gap=max(gap, 0.0), iterations=iterations)


# Area densities

@dataclass(frozen=True)
class AreaDensity:
    """A choice of Finsler volume normalization."""

    definition: str = "loewner"
    omega: Tuple[float, ...] = field(default_factory=lambda: tuple(omega(k) for k in range(5)))

    def __post_init__(self):
        if self.definition not in DENSITIES:
            raise ArgumentError(f"Unknown density definition {self.definition!r}; expected one of {DENSITIES}")

    @classmethod
    def parse(cls, value: Union[str, "AreaDensity"]) -> "AreaDensity":
        if isinstance(value, AreaDensity):
            return value
        return cls(str(value).strip().lower().replace("-", "_"))

    def omega_n(self, n: int) -> float:
        return self.omega[n] if n < len(self.omega) else omega(n)


def min_parallelotope_volume(norm: Norm) -> float:
    """Volume of the smallest parallelotope circumscribed about the unit ball.

    A parallelotope with covector sides f_1..f_n has volume
    2^n prod h(f_i) / |det F| where h is the support function. Candidates
    are facet tuples; in the plane the best pair is polished over both
    orientations.
    """
    n = norm.dim
    if n > get_config().max_dim:
        raise UnsupportedDimensionError(f"Benson density is supported up to dimension 4, got {n}")
    if norm.kind == "euclidean":
        return 2.0 ** n / math.sqrt(np.linalg.det(norm.matrix))
    if norm.kind == "lp" and math.isinf(norm.p):
        return 2.0 ** n
    poly = polytope_approximation(norm)
    if n == 1:
        return ball_volume(poly)

    cands = poly.facets / np.linalg.norm(poly.facets, axis=1, keepdims=True)
    cands = np.unique(np.round(cands * np.sign(cands[:, [0]] + 1e-300), 14), axis=0)
    verts = poly.vertices
    h = np.abs(cands @ verts.T).max(axis=1)

    best = math.inf
    best_tuple = None
    combos = itertools.combinations(range(len(cands)), n)
    total = math.comb(len(cands), n)
    if total > _BENSON_MAX_TUPLES:
        rng = np.random.default_rng(0)
        combos = (tuple(sorted(rng.choice(len(cands), size=n, replace=False))) for _ in range(_BENSON_MAX_TUPLES))
    for idx in combos:
        idx = list(idx)
        det = abs(np.linalg.det(cands[idx]))
        if det < 1e-12:
            continue
        vol = 2.0 ** n * float(np.prod(h[idx])) / det
        if vol < best:
            best, best_tuple = vol, idx

    if n == 2 and best_tuple is not None:
        def objective(theta):
            f = np.column_stack([np.cos(theta), np.sin(theta)])
            det = abs(np.linalg.det(f))
            if det < 1e-12:
                return math.inf
            return 4.0 * float(np.prod(np.abs(f @ verts.T).max(axis=1))) / det

        start = np.arctan2(cands[best_tuple, 1], cands[best_tuple, 0])
        res = minimize(objective, start, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
        best = min(best, float(res.fun))
    return best


def volume_density(norm: Norm, definition: Union[str, AreaDensity] = "loewner") -> float:
    """Finsler volume density of norm relative to Lebesgue measure.

    busemann:        omega_n / vol(B)
    loewner:         omega_n / vol(John(B))
    holmes_thompson: vol(B°) / omega_n
    benson:          2^n / vol(minimal circumscribed parallelotope)

    Every definition returns sqrt(det A) on euclidean(A), so the density is
    1 exactly on the standard Euclidean norm and otherwise measures the
    distortion of A against Lebesgue measure.
    """
    density = AreaDensity.parse(definition)
    n = norm.dim
    w = density.omega_n(n)
    if density.definition == "busemann":
        return w / ball_volume(norm)
    if density.definition == "loewner":
        return w / john_ellipsoid(norm).volume
    if density.definition == "holmes_thompson":
        return polar_volume(norm) / w
    return 2.0 ** n / min_parallelotope_volume(norm)


# JSON codecs

def norm_to_dict(norm: Norm) -> Dict:
    p = None
    if norm.p is not None:
        p = "inf" if math.isinf(norm.p) else norm.p
    return {
        "dim": norm.dim,
        "kind": norm.kind,
        "facets": None if norm.facets is None else norm.facets.tolist(),
        "matrix": None if norm.matrix is None else norm.matrix.tolist(),
        "p": p,
    }


def norm_from_dict(data: Dict) -> Norm:
    if not isinstance(data, dict):
        raise ConfigError("Norm JSON must be an object")
    unknown = set(data) - {"dim", "kind", "facets", "matrix", "p"}
    if unknown:
        raise ConfigError(f"Unknown norm keys: {sorted(unknown)}")
    try:
        kind = data["kind"]
        dim = int(data["dim"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Norm JSON needs integer 'dim' and 'kind': {e}")
    try:
        if kind == "euclidean":
            norm = Norm(dim=dim, kind=kind, matrix=np.array(data["matrix"], dtype=float))
        elif kind == "lp":
            p = data["p"]
            norm = Norm(dim=dim, kind=kind, p=math.inf if p in ("inf", "Infinity") else float(p))
        elif kind == "polytope":
            norm = Norm(dim=dim, kind=kind, facets=np.array(data["facets"], dtype=float))
        else:
            raise ConfigError(f"Unknown norm kind {kind!r}")
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Malformed norm JSON: {e}")
    return norm


def ellipsoid_to_dict(ellipsoid: Ellipsoid) -> Dict:
    return {
        "dim": ellipsoid.dim,
        "shape": ellipsoid.shape.reshape(-1).tolist(),
        "volume": ellipsoid.volume,
        "gap": ellipsoid.gap,
        "iterations": ellipsoid.iterations,
    }


def density_report(norm: Norm, definition: Union[str, AreaDensity]) -> Dict:
    """Density JSON payload; carries the John ellipsoid for the loewner definition."""
    density = AreaDensity.parse(definition)
    report = {"definition": density.definition, "density": volume_density(norm, density)}
    if density.definition == "loewner":
        report["ellipsoid"] = ellipsoid_to_dict(john_ellipsoid(norm))
    get_logger().debug(f"Density {density.definition} of {norm.kind} norm: {report['density']:.12g}")
    return report
