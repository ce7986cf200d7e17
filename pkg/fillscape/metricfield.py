"""Riemannian metric fields on disc domains.

A MetricField is an immutable tensor model g(x) on the chart disc
|x| <= R (or on the plane for Z^2-periodic fields). It provides geodesics
(Hamiltonian RK4), two-point distances by multi-start shooting seeded from
a lattice-graph shortest path, boundary distance tables, Riemannian volume
by quadrature, and the three-part simplicity test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator
from scipy.linalg import eigh
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .config import get_config
from .errors import (
    ArgumentError,
    CollarError,
    ConfigError,
    NonconvergenceError,
    UnsupportedDimensionError,
)
from .logger import get_logger
from .parallel import parallel_map

FIELD_KINDS = ("euclidean", "constant", "hyperbolic", "sphere", "conformal", "perturbed", "custom", "periodic")
BASES = ("flat", "hyperbolic", "sphere", "grid")

_FD_STEP = 1e-7
_JACOBI_ANGLE = 1e-6
_MAX_ADAPTIVE_STEPS = 200_000
_CHUNK = 200_000


# Band-limited scalar functions

@dataclass(frozen=True, eq=False)
class TrigSeries:
    """Band-limited function f(x) = sum_j A_j cos(omega k_j . x + theta_j)."""

    wavevectors: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    frequency: float

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int, modes: int = 6, max_freq: int = 3,
               frequency: float = math.pi, normalize: str = "c2") -> "TrigSeries":
        """Seeded series normalized by sum |A| (1 + |w| + |w|^2) = 1 ("c2") or sum |A| = 1 ("sup")."""
        k = rng.integers(-max_freq, max_freq + 1, size=(modes, dim))
        zero = ~k.any(axis=1)
        k[zero, 0] = 1
        amps = rng.normal(size=modes)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=modes)
        mag = frequency * np.linalg.norm(k, axis=1)
        weight = 1.0 + mag + mag ** 2 if normalize == "c2" else np.ones(modes)
        amps = amps / np.sum(np.abs(amps) * weight)
        return cls(k.astype(float), amps, phases, float(frequency))

    def scaled(self, factor: float) -> "TrigSeries":
        return replace(self, amplitudes=self.amplitudes * factor)

    def _phase(self, x: np.ndarray) -> np.ndarray:
        return self.frequency * (x @ self.wavevectors.T) + self.phases

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.cos(self._phase(x)) @ self.amplitudes

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return -(np.sin(self._phase(x)) * self.amplitudes) @ (self.frequency * self.wavevectors)

    def sup_bound(self) -> float:
        return float(np.sum(np.abs(self.amplitudes)))

    def to_dict(self) -> Dict:
        return {
            "wavevectors": self.wavevectors.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "phases": self.phases.tolist(),
            "frequency": self.frequency,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "TrigSeries":
        return cls(np.array(data["wavevectors"], dtype=float), np.array(data["amplitudes"], dtype=float),
                   np.array(data["phases"], dtype=float), float(data["frequency"]))


def _upper_pairs(dim: int) -> List[Tuple[int, int]]:
    return [(i, j) for i in range(dim) for j in range(i, dim)]


# Metric fields

@dataclass(frozen=True, eq=False)
class MetricField:
    """Metric tensor g(x) = scale * exp(2 psi(x)) * G_base(x) + eps * H(x).

    G_base is a constant SPD matrix ("flat"), the Poincare-disc tensor
    4 delta / (1 - |x|^2)^2 ("hyperbolic"), the stereographic round tensor
    4 delta / (1 + |x|^2)^2 ("sphere"), or a bicubic interpolant of grid
    samples ("grid"). psi is an optional band-limited conformal factor and
    H an optional band-limited symmetric tensor.
    """

    dim: int = 2
    radius: float = 1.0
    kind: str = "euclidean"
    base: str = "flat"
    matrix: Optional[np.ndarray] = None
    scale: float = 1.0
    conformal: Optional[TrigSeries] = None
    perturbation: Tuple[TrigSeries, ...] = ()
    eps: float = 0.0
    spacing: Optional[float] = None
    collar: Optional[float] = None
    grid_tensors: Optional[np.ndarray] = None
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise UnsupportedDimensionError(f"Metric fields live in dimension 2 or 3, got {self.dim}")
        if self.kind not in FIELD_KINDS:
            raise ArgumentError(f"Unknown metric kind {self.kind!r}")
        if self.base not in BASES:
            raise ArgumentError(f"Unknown metric base {self.base!r}")
        if self.is_periodic:
            object.__setattr__(self, "radius", math.inf)
        elif not (self.radius > 0 and math.isfinite(self.radius)):
            raise ArgumentError(f"Domain radius must be positive, got {self.radius}")
        if self.collar is None:
            object.__setattr__(self, "collar", get_config().collar)
        if self.spacing is None:
            object.__setattr__(self, "spacing", 1.0 / 16.0 if self.is_periodic else self.radius / 16.0)
        if self.spacing <= 0 or self.collar < 0:
            raise ArgumentError("Grid spacing must be positive and collar nonnegative")
        if self.base == "hyperbolic" and self.outer_radius >= 1.0:
            raise ArgumentError(
                f"Poincare chart radius {self.radius} plus collar {self.collar} must stay below 1"
            )
        if self.scale <= 0:
            raise ArgumentError(f"Metric scale must be positive, got {self.scale}")
        if self.base == "flat":
            A = np.eye(self.dim) if self.matrix is None else np.array(self.matrix, dtype=float)
            if A.shape != (self.dim, self.dim) or not np.allclose(A, A.T):
                raise ArgumentError(f"Constant metric must be a symmetric {self.dim}x{self.dim} matrix")
            object.__setattr__(self, "matrix", A)
        if self.base == "grid":
            T = np.asarray(self.grid_tensors, dtype=float)
            n = len(self.grid_axis)
            if T.shape != (n,) * self.dim + (self.dim, self.dim):
                raise ArgumentError(f"Grid tensors have shape {T.shape}, expected {(n,) * self.dim + (self.dim, self.dim)}")
            object.__setattr__(self, "grid_tensors", 0.5 * (T + np.swapaxes(T, -1, -2)))
        if len(self.perturbation) not in (0, len(_upper_pairs(self.dim))):
            raise ArgumentError("Tensor perturbation needs one series per upper-triangular component")

        low = self.min_eigenvalue()
        if not low > 0.0:
            raise ArgumentError(f"Metric tensor is not positive definite on the grid (min eigenvalue {low:.3e})")

    # Constructors

    @classmethod
    def euclidean(cls, radius: float = 1.0, dim: int = 2, **kw) -> "MetricField":
        return cls(dim=dim, radius=radius, kind="euclidean", base="flat", matrix=np.eye(dim), **kw)

    @classmethod
    def constant(cls, matrix, radius: float = 1.0, **kw) -> "MetricField":
        A = np.array(matrix, dtype=float)
        return cls(dim=A.shape[0], radius=radius, kind="constant", base="flat", matrix=A, **kw)

    @classmethod
    def hyperbolic(cls, radius: float = 0.5, dim: int = 2, **kw) -> "MetricField":
        return cls(dim=dim, radius=radius, kind="hyperbolic", base="hyperbolic", **kw)

    @classmethod
    def sphere(cls, intrinsic_radius: float, dim: int = 2, **kw) -> "MetricField":
        """Round unit-sphere metric on the geodesic ball of the given intrinsic radius."""
        if not 0 < intrinsic_radius < math.pi:
            raise ArgumentError(f"Intrinsic radius must lie in (0, pi), got {intrinsic_radius}")
        params = {"intrinsic_radius": float(intrinsic_radius)}
        return cls(dim=dim, radius=math.tan(intrinsic_radius / 2.0), kind="sphere", base="sphere",
                   params=params, **kw)

    @classmethod
    def custom(cls, grid_tensors, radius: float, spacing: float, collar: Optional[float] = None) -> "MetricField":
        T = np.asarray(grid_tensors, dtype=float)
        return cls(dim=T.shape[-1], radius=radius, kind="custom", base="grid", spacing=spacing,
                   collar=collar, grid_tensors=T)

    @classmethod
    def periodic(cls, matrix=None, amplitude: float = 0.0, seed: int = 0, modes: int = 4,
                 max_freq: int = 2) -> "MetricField":
        """Z^2-periodic metric exp(2 psi) A on the plane."""
        A = np.eye(2) if matrix is None else np.array(matrix, dtype=float)
        psi = None
        if amplitude > 0:
            rng = np.random.default_rng(seed)
            psi = TrigSeries.random(rng, 2, modes, max_freq, frequency=2.0 * math.pi, normalize="sup").scaled(amplitude)
        params = {"amplitude": float(amplitude), "seed": int(seed)}
        return cls(dim=2, kind="periodic", base="flat", matrix=A, conformal=psi, params=params)

    def with_conformal_factor(self, amplitude: float, seed: int, modes: int = 6, max_freq: int = 3) -> "MetricField":
        """exp(2 psi) times this metric, psi seeded and band-limited with sup |psi| <= amplitude."""
        if self.is_periodic:
            raise ArgumentError("Use MetricField.periodic for periodic conformal fields")
        rng = np.random.default_rng(seed)
        psi = TrigSeries.random(rng, self.dim, modes, max_freq, frequency=math.pi / self.radius,
                                normalize="sup").scaled(amplitude)
        params = dict(self.params, base_kind=self.kind, amplitude=float(amplitude), seed=int(seed))
        return replace(self, kind="conformal", conformal=psi, params=params)

    def with_perturbation(self, eps: float, seed: int, modes: int = 6, max_freq: int = 3) -> "MetricField":
        """This metric plus eps * h, h a seeded band-limited symmetric tensor field.

        Each component of h satisfies sup|h| + sup|dh| + sup|d^2 h| <= 1.
        """
        if eps < 0:
            raise ArgumentError(f"Perturbation size must be nonnegative, got {eps}")
        if eps == 0:
            return self
        rng = np.random.default_rng(seed)
        freq = 2.0 * math.pi if self.is_periodic else math.pi / self.radius
        h = tuple(TrigSeries.random(rng, self.dim, modes, max_freq, frequency=freq, normalize="c2")
                  for _ in _upper_pairs(self.dim))
        params = dict(self.params, base_kind=self.kind, eps=float(eps), seed=int(seed))
        return replace(self, kind="perturbed", perturbation=h, eps=float(eps), params=params)

    def scaled(self, factor: float) -> "MetricField":
        """The metric factor * g."""
        return replace(self, scale=self.scale * factor, eps=self.eps * factor)

    # Geometry of the chart

    @property
    def is_periodic(self) -> bool:
        return self.kind == "periodic"

    @property
    def outer_radius(self) -> float:
        return self.radius + self.collar

    @cached_property
    def grid_axis(self) -> np.ndarray:
        h = self.spacing
        if self.is_periodic:
            return h * np.arange(int(round(1.0 / h)))
        n0 = int(math.ceil(self.outer_radius / h - 1e-9))
        return h * np.arange(-n0, n0 + 1)

    def grid_points(self) -> np.ndarray:
        axes = np.meshgrid(*([self.grid_axis] * self.dim), indexing="ij")
        return np.stack([a.reshape(-1) for a in axes], axis=1)

    def contains(self, x, slack: float = 1e-12) -> bool:
        if self.is_periodic:
            return True
        return float(np.linalg.norm(x)) <= self.radius * (1.0 + slack) + slack

    def _clamp(self, x: np.ndarray) -> np.ndarray:
        if self.is_periodic:
            return x
        r = np.linalg.norm(x, axis=-1)
        over = r > self.outer_radius
        if not over.any():
            return x
        x = x.copy()
        x[over] *= (self.outer_radius / r[over])[:, None]
        return x

    # Tensor evaluation

    @cached_property
    def _interpolants(self):
        axis = self.grid_axis
        T = self.grid_tensors
        pairs = _upper_pairs(self.dim)
        if self.dim == 2:
            return [RectBivariateSpline(axis, axis, T[..., i, j], kx=3, ky=3, s=0) for i, j in pairs]
        return [RegularGridInterpolator((axis,) * 3, T[..., i, j], method="cubic", bounds_error=False,
                                        fill_value=None) for i, j in pairs]

    def _grid_tensor(self, x: np.ndarray, derivatives: bool):
        B, d = x.shape
        G = np.empty((B, d, d))
        dG = np.zeros((B, d, d, d)) if derivatives else None
        for (i, j), spl in zip(_upper_pairs(d), self._interpolants):
            if d == 2:
                G[:, i, j] = G[:, j, i] = spl.ev(x[:, 0], x[:, 1])
                if derivatives:
                    dG[:, 0, i, j] = dG[:, 0, j, i] = spl.ev(x[:, 0], x[:, 1], dx=1)
                    dG[:, 1, i, j] = dG[:, 1, j, i] = spl.ev(x[:, 0], x[:, 1], dy=1)
            else:
                G[:, i, j] = G[:, j, i] = spl(x)
                if derivatives:
                    step = 1e-5 * self.spacing
                    for k in range(d):
                        e = np.zeros(d)
                        e[k] = step
                        dG[:, k, i, j] = dG[:, k, j, i] = (spl(x + e) - spl(x - e)) / (2 * step)
        return G, dG

    def _evaluate(self, x: np.ndarray, derivatives: bool = True):
        """(g, dg) at a batch of points, dg[b, k, i, j] = d_k g_ij; no domain checks."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        B, d = x.shape
        eye = np.eye(d)
        if self.base == "flat":
            G = np.broadcast_to(self.matrix, (B, d, d)).copy()
            dG = np.zeros((B, d, d, d)) if derivatives else None
        elif self.base == "grid":
            G, dG = self._grid_tensor(x, derivatives)
        else:
            r2 = np.einsum("bi,bi->b", x, x)
            if self.base == "hyperbolic":
                lam = 2.0 / (1.0 - r2)
                dlog = 2.0 * x / (1.0 - r2)[:, None]
            else:
                lam = 2.0 / (1.0 + r2)
                dlog = -2.0 * x / (1.0 + r2)[:, None]
            G = (lam ** 2)[:, None, None] * eye
            dG = 2.0 * dlog[:, :, None, None] * G[:, None, :, :] if derivatives else None

        if self.conformal is not None:
            e2 = np.exp(2.0 * self.conformal(x))
            if derivatives:
                dpsi = self.conformal.gradient(x)
                dG = e2[:, None, None, None] * (dG + 2.0 * dpsi[:, :, None, None] * G[:, None, :, :])
            G = e2[:, None, None] * G
        if self.scale != 1.0:
            G = self.scale * G
            if derivatives:
                dG = self.scale * dG
        if self.perturbation:
            for (i, j), h in zip(_upper_pairs(d), self.perturbation):
                val = self.eps * h(x)
                G[:, i, j] += val
                if i != j:
                    G[:, j, i] += val
                if derivatives:
                    dh = self.eps * h.gradient(x)
                    dG[:, :, i, j] += dh
                    if i != j:
                        dG[:, :, j, i] += dh
        return G, dG

    def tensor(self, x) -> np.ndarray:
        """g at a point or batch; raises CollarError outside the collar."""
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        if not self.is_periodic and np.any(np.linalg.norm(pts, axis=1) > self.outer_radius * (1 + 1e-12)):
            raise CollarError(f"Tensor requested outside the collar radius {self.outer_radius:.6g}")
        G, _ = self._evaluate(pts, derivatives=False)
        return G[0] if x.ndim == 1 else G

    def min_eigenvalue(self, points: Optional[np.ndarray] = None) -> float:
        """Smallest eigenvalue of g over grid nodes inside the collar (or over given points)."""
        if points is None:
            points = self.grid_points()
            if not self.is_periodic:
                points = points[np.linalg.norm(points, axis=1) <= self.outer_radius]
        G, _ = self._evaluate(points, derivatives=False)
        return float(np.linalg.eigvalsh(G).min())

    def speed(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        G, _ = self._evaluate(self._clamp(np.atleast_2d(x)), derivatives=False)
        v = np.atleast_2d(v)
        return np.sqrt(np.maximum(np.einsum("bi,bij,bj->b", v, G, v), 0.0))

    def describe(self) -> str:
        extent = "periodic" if self.is_periodic else f"R={self.radius:.6g}"
        return f"{self.kind} metric field (dim {self.dim}, {extent})"


# Serialization

def field_to_dict(fld: MetricField, include_nodes: bool = True) -> Dict:
    params = {
        "base": fld.base,
        "scale": fld.scale,
        "eps": fld.eps,
        "matrix": None if fld.matrix is None else fld.matrix.tolist(),
        "conformal": None if fld.conformal is None else fld.conformal.to_dict(),
        "perturbation": [h.to_dict() for h in fld.perturbation],
        "extra": fld.params,
    }
    data = {
        "dim": fld.dim,
        "R": None if fld.is_periodic else fld.radius,
        "h": fld.spacing,
        "collar": fld.collar,
        "kind": fld.kind,
        "params": params,
    }
    if include_nodes:
        G, _ = fld._evaluate(fld.grid_points(), derivatives=False)
        data["nodes"] = G.reshape(len(G), -1).tolist()
    return data


def field_from_dict(data: Dict) -> MetricField:
    """Rebuild a field from JSON; closed-form kinds from params, custom from nodes."""
    if not isinstance(data, dict):
        raise ConfigError("Metric field JSON must be an object")
    unknown = set(data) - {"dim", "R", "h", "collar", "kind", "params", "nodes"}
    if unknown:
        raise ConfigError(f"Unknown metric field keys: {sorted(unknown)}")
    try:
        dim = int(data.get("dim", 2))
        kind = data["kind"]
        radius = data.get("R")
        spacing = data.get("h")
        collar = data.get("collar")
        params = data.get("params")
        if kind == "custom" or params is None:
            if "nodes" not in data:
                raise ConfigError("Custom metric fields need 'nodes'")
            proto = MetricField.euclidean(radius=float(radius), dim=dim, spacing=spacing, collar=collar)
            n = len(proto.grid_axis)
            T = np.array(data["nodes"], dtype=float).reshape((n,) * dim + (dim, dim))
            return MetricField.custom(T, radius=float(radius), spacing=proto.spacing, collar=proto.collar)
        extra = dict(params.get("extra") or {})
        return MetricField(
            dim=dim,
            radius=math.inf if radius is None else float(radius),
            kind=kind,
            base=params.get("base", "flat"),
            matrix=None if params.get("matrix") is None else np.array(params["matrix"], dtype=float),
            scale=float(params.get("scale", 1.0)),
            conformal=None if params.get("conformal") is None else TrigSeries.from_dict(params["conformal"]),
            perturbation=tuple(TrigSeries.from_dict(h) for h in params.get("perturbation") or ()),
            eps=float(params.get("eps", 0.0)),
            spacing=spacing,
            collar=collar,
            params=extra,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ArgumentError):
            raise
        raise ConfigError(f"Malformed metric field JSON: {e}")


def field_from_config(spec: Dict) -> MetricField:
    """Build a field from a compact config entry such as
    {"kind": "hyperbolic", "R": 0.5} or {"kind": "perturbed", "base": "euclidean", "eps": 0.05, "seed": 1}.
    """
    if "nodes" in spec or "params" in spec:
        return field_from_dict(spec)
    spec = dict(spec)
    kind = spec.pop("kind", "euclidean")
    seed = int(spec.pop("seed", 0))
    try:
        if kind == "euclidean":
            fld = MetricField.euclidean(radius=float(spec.pop("R", 1.0)))
        elif kind == "constant":
            fld = MetricField.constant(spec.pop("matrix"), radius=float(spec.pop("R", 1.0)))
        elif kind == "hyperbolic":
            fld = MetricField.hyperbolic(radius=float(spec.pop("R", 0.5)))
        elif kind == "sphere":
            fld = MetricField.sphere(float(spec.pop("intrinsic_radius", math.pi / 2)))
        elif kind == "periodic":
            fld = MetricField.periodic(spec.pop("matrix", None), float(spec.pop("amplitude", 0.0)), seed)
        elif kind in ("conformal", "perturbed"):
            base_spec = {"kind": spec.pop("base", "euclidean")}
            for key in ("R", "intrinsic_radius", "matrix"):
                if key in spec:
                    base_spec[key] = spec.pop(key)
            base = field_from_config(base_spec)
            if kind == "conformal":
                fld = base.with_conformal_factor(float(spec.pop("amplitude", 0.1)), seed)
            else:
                fld = base.with_perturbation(float(spec.pop("eps", 0.05)), seed)
        else:
            raise ConfigError(f"Unknown metric field kind {kind!r}")
    except KeyError as e:
        raise ConfigError(f"Metric field config for {kind!r} is missing {e}")
    if spec:
        raise ConfigError(f"Unknown keys for {kind!r} metric field: {sorted(spec)}")
    return fld


# Geodesic integration

def _flow(fld: MetricField, x: np.ndarray, p: np.ndarray):
    g, dg = fld._evaluate(fld._clamp(x))
    v = np.linalg.solve(g, p[..., None])[..., 0]
    return v, 0.5 * np.einsum("bi,bkij,bj->bk", v, dg, v)


def _rk4(fld: MetricField, x: np.ndarray, p: np.ndarray, dt):
    k1x, k1p = _flow(fld, x, p)
    k2x, k2p = _flow(fld, x + 0.5 * dt * k1x, p + 0.5 * dt * k1p)
    k3x, k3p = _flow(fld, x + 0.5 * dt * k2x, p + 0.5 * dt * k2p)
    k4x, k4p = _flow(fld, x + dt * k3x, p + dt * k3p)
    return (x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p))


def _integrate(fld: MetricField, x0: np.ndarray, v0: np.ndarray, T: float, step: float,
               limit: Optional[float], record: bool = False):
    """Fixed-step RK4 on (x, p = g v) for a batch of initial velocities.

    The step count is chosen so each step moves at most `step` in the chart
    and takes at most `step` in time. Elements crossing |x| > limit are
    frozen and flagged.
    """
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    B = len(v0)
    x = np.broadcast_to(np.asarray(x0, dtype=float), v0.shape).copy()
    g0, _ = fld._evaluate(fld._clamp(x), derivatives=False)
    p = np.einsum("bij,bj->bi", g0, v0)
    chart = max(1.0, float(np.linalg.norm(v0, axis=1).max())) * T
    n = max(1, int(math.ceil(chart / step - 1e-9)))
    dt = T / n
    alive = np.ones(B, dtype=bool)
    exited = np.zeros(B, dtype=bool)
    xs, ps = ([x.copy()], [p.copy()]) if record else (None, None)
    for _ in range(n):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xn, pn = _rk4(fld, x[idx], p[idx], dt)
        x[idx], p[idx] = xn, pn
        if limit is not None:
            out = np.linalg.norm(xn, axis=1) > limit
            if out.any():
                exited[idx[out]] = True
                alive[idx[out]] = False
        if record:
            xs.append(x.copy())
            ps.append(p.copy())
    traj = (np.array(xs), np.array(ps), dt) if record else None
    return x, p, exited, traj


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speeds: np.ndarray
    exited: bool = False

    @property
    def length(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(trapezoid(self.speeds, self.times))

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]


def _path_from_trajectory(fld: MetricField, xs: np.ndarray, ps: np.ndarray, dt: float, exited: bool) -> GeodesicPath:
    g, _ = fld._evaluate(fld._clamp(xs), derivatives=False)
    v = np.linalg.solve(g, ps[..., None])[..., 0]
    speeds = np.sqrt(np.maximum(np.einsum("bi,bi->b", v, ps), 0.0))
    return GeodesicPath(dt * np.arange(len(xs)), xs, v, speeds, exited)


def geodesic_shoot(fld: MetricField, x, v, T: float = 1.0, step: Optional[float] = None) -> GeodesicPath:
    """Integrate the geodesic with x(0) = x, x'(0) = v up to time T.

    Stops at the first sample outside the closed domain and flags the exit.
    """
    step = get_config().step if step is None else step
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != (fld.dim,) or v.shape != (fld.dim,):
        raise ArgumentError(f"Point and velocity must have dimension {fld.dim}")
    if step <= 0 or T < 0:
        raise ArgumentError("Integrator step must be positive and T nonnegative")
    if not np.any(v):
        raise ArgumentError("Initial velocity must be nonzero")
    if not fld.contains(x):
        raise ArgumentError(f"Start point {x.tolist()} lies outside the domain")
    limit = None if fld.is_periodic else fld.radius * (1.0 + 1e-9) + 1e-12
    _, _, exited, (xs, ps, dt) = _integrate(fld, x, v[None, :], T, step, limit, record=True)
    xs, ps = xs[:, 0, :], ps[:, 0, :]
    if exited[0]:
        last = int(np.argmax(np.linalg.norm(xs, axis=1) > limit))
        xs, ps = xs[: last + 1], ps[: last + 1]
    return _path_from_trajectory(fld, xs, ps, dt, bool(exited[0]))


# Lattice graphs

def _primitive_stencil(dim: int, reach: int) -> np.ndarray:
    """Primitive integer vectors with max-norm <= reach, one of each +- pair."""
    rng = range(-reach, reach + 1)
    out = []
    for k in np.array(np.meshgrid(*([list(rng)] * dim), indexing="ij")).reshape(dim, -1).T:
        if not k.any() or math.gcd(*[int(abs(c)) for c in k]) != 1:
            continue
        first = k[np.flatnonzero(k)[0]]
        if first > 0:
            out.append(k)
    return np.array(out, dtype=int)


def segment_lengths(fld: MetricField, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """g-length of straight chart segments a -> b by Simpson's rule."""
    out = np.empty(len(a))
    for start in range(0, len(a), _CHUNK):
        sl = slice(start, start + _CHUNK)
        e = b[sl] - a[sl]
        acc = np.zeros(len(e))
        for w, z in ((1.0, a[sl]), (4.0, 0.5 * (a[sl] + b[sl])), (1.0, b[sl])):
            G, _ = fld._evaluate(fld._clamp(z), derivatives=False)
            acc += w * np.sqrt(np.maximum(np.einsum("bi,bij,bj->b", e, G, e), 0.0))
        out[sl] = acc / 6.0
    return out


@dataclass
class LatticeGraph:
    """Undirected weighted graph on chart points."""

    points: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def shortest_paths(self, extra: np.ndarray, fld: MetricField, neighbours: int = 12,
                       source: int = 0, predecessors: bool = False):
        """Dijkstra from extra[source] after attaching `extra` points to their nearest nodes."""
        N = len(self.points)
        k = min(neighbours, N)
        _, nn = self.tree.query(extra, k=k)
        nn = np.atleast_2d(nn)
        ext_ids = N + np.arange(len(extra))
        a = np.repeat(extra, k, axis=0)
        b = self.points[nn.reshape(-1)]
        w = segment_lengths(fld, a, b)
        rows = np.concatenate([self.rows, np.repeat(ext_ids, k)])
        cols = np.concatenate([self.cols, nn.reshape(-1)])
        weights = np.concatenate([self.weights, w])
        # extra points also see each other directly
        if len(extra) > 1:
            src = np.full(len(extra) - 1, ext_ids[source])
            others = np.delete(ext_ids, source)
            direct = segment_lengths(fld, np.repeat(extra[[source]], len(others), axis=0), np.delete(extra, source, axis=0))
            if not fld.is_periodic:
                mids = 0.5 * (extra[[source]] + np.delete(extra, source, axis=0))
                ok = np.linalg.norm(mids, axis=1) <= fld.radius
                src, others, direct = src[ok], others[ok], direct[ok]
            rows = np.concatenate([rows, src])
            cols = np.concatenate([cols, others])
            weights = np.concatenate([weights, direct])
        M = N + len(extra)
        graph = coo_matrix((np.maximum(weights, 1e-300), (rows, cols)), shape=(M, M)).tocsr()
        return dijkstra(graph, directed=False, indices=ext_ids[source], return_predecessors=predecessors), ext_ids


def lattice_graph(fld: MetricField, lo: np.ndarray, hi: np.ndarray, spacing: float, reach: int,
                  ring: int = 0) -> LatticeGraph:
    """Lattice over the box [lo, hi] with a primitive stencil of the given reach.

    For disc fields nodes are restricted to the closed disc and `ring`
    extra nodes are placed on the boundary circle.
    """
    d = fld.dim
    counts = np.floor((np.asarray(hi) - np.asarray(lo)) / spacing + 1e-9).astype(int) + 1
    axes = [lo[i] + spacing * np.arange(counts[i]) for i in range(d)]
    mesh = np.stack([a.reshape(-1) for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    index = -np.ones(counts.prod(), dtype=int)
    keep = np.ones(len(mesh), dtype=bool)
    if not fld.is_periodic:
        keep = np.linalg.norm(mesh, axis=1) <= fld.radius * (1 - 1e-9)
    index[keep] = np.arange(keep.sum())
    points = mesh[keep]
    index = index.reshape(tuple(counts))
    grid_ids = np.stack(np.meshgrid(*[np.arange(c) for c in counts], indexing="ij"), axis=-1).reshape(-1, d)[keep]

    rows, cols = [], []
    for s in _primitive_stencil(d, reach):
        nb = grid_ids + s
        ok = np.all((nb >= 0) & (nb < counts), axis=1)
        src = np.flatnonzero(ok)
        dst = index[tuple(nb[ok].T)]
        good = dst >= 0
        rows.append(src[good])
        cols.append(dst[good])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    if ring and not fld.is_periodic:
        if d == 2:
            theta = 2 * math.pi * np.arange(ring) / ring
            ring_pts = fld.radius * np.column_stack([np.cos(theta), np.sin(theta)])
        else:
            ring_pts = fld.radius * fibonacci_sphere(ring)
        base = len(points)
        tree = cKDTree(points)
        near = tree.query_ball_point(ring_pts, r=2.5 * spacing)
        r_rows = [np.full(len(nb), base + i) for i, nb in enumerate(near)]
        r_cols = [np.asarray(nb, dtype=int) for nb in near]
        rows = np.concatenate([rows] + r_rows)
        cols = np.concatenate([cols] + r_cols)
        if d == 2:
            rows = np.concatenate([rows, base + np.arange(ring)])
            cols = np.concatenate([cols, base + (np.arange(ring) + 1) % ring])
        points = np.vstack([points, ring_pts])
    weights = segment_lengths(fld, points[rows], points[cols])
    return LatticeGraph(points, rows, cols, weights)


def fibonacci_sphere(count: int) -> np.ndarray:
    """Quasi-uniform unit vectors on S^2."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z ** 2)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _disc_graph(fld: MetricField) -> LatticeGraph:
    cached = fld.__dict__.get("_graph")
    if cached is None:
        nodes = get_config().graph_nodes if fld.dim == 2 else max(9, get_config().graph_nodes // 3)
        R = fld.radius
        h = 2.0 * R / (nodes - 1)
        reach = 2 if fld.dim == 2 else 1
        ring = 4 * nodes if fld.dim == 2 else 2 * nodes ** 2
        cached = lattice_graph(fld, np.full(fld.dim, -R), np.full(fld.dim, R), h, reach, ring=ring)
        fld.__dict__["_graph"] = cached
    return cached


def _graph_from(fld: MetricField, x: np.ndarray, targets: np.ndarray, predecessors: bool = False):
    extra = np.vstack([x[None, :], targets])
    if fld.is_periodic:
        lo = extra.min(axis=0) - 1.0
        hi = extra.max(axis=0) + 1.0
        graph = lattice_graph(fld, lo, hi, 1.0 / 8.0, 2)
    else:
        graph = _disc_graph(fld)
    result, ids = graph.shortest_paths(extra, fld, predecessors=predecessors)
    return graph, extra, result, ids


def graph_distance(fld: MetricField, x, y) -> Tuple[float, np.ndarray]:
    """Lattice shortest-path length and path points; an upper estimate of d(x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for pt in (x, y):
        if pt.shape != (fld.dim,) or not fld.contains(pt):
            raise ArgumentError(f"Point {pt.tolist()} is not a point of the domain")
    graph, extra, (dist, pred), ids = _graph_from(fld, x, y[None, :], predecessors=True)
    path = _walk(pred, ids[0], ids[1])
    allpts = np.vstack([graph.points, extra])
    return float(dist[ids[1]]), allpts[path]


def _walk(pred: np.ndarray, source: int, target: int) -> List[int]:
    path = [target]
    while path[-1] != source and pred[path[-1]] >= 0:
        path.append(int(pred[path[-1]]))
    return path[::-1]


# Two-point shooting

def _fan(dim: int, count: int) -> np.ndarray:
    if dim == 2:
        theta = 2 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(theta), np.sin(theta)])
    return fibonacci_sphere(count)


def _endpoints(fld: MetricField, x: np.ndarray, v: np.ndarray, step: float):
    limit = None if fld.is_periodic else fld.outer_radius
    end, _, exited, _ = _integrate(fld, x, v, 1.0, step, limit)
    return end, exited


def _miss(end: np.ndarray, exited: np.ndarray, targets: np.ndarray) -> np.ndarray:
    res = np.linalg.norm(end - targets, axis=1)
    res[exited] = np.inf
    return res


def _newton(fld: MetricField, x: np.ndarray, v0: np.ndarray, targets: np.ndarray, tol: float,
            step: float, max_iter: int):
    """Damped Newton on v -> exp_x(v) - target with forward-difference Jacobians."""
    v = v0.copy()
    B, d = v.shape
    end, exited = _endpoints(fld, x, v, step)
    res = _miss(end, exited, targets)
    stalled = ~np.isfinite(res)
    for it in range(max_iter):
        active = np.flatnonzero((res > tol) & ~stalled)
        if active.size == 0:
            break
        va, ea = v[active], end[active]
        h = _FD_STEP * np.maximum(1.0, np.linalg.norm(va, axis=1))
        pert = (va[:, None, :] + h[:, None, None] * np.eye(d)[None]).reshape(-1, d)
        pend, pex = _endpoints(fld, x, pert, step)
        pend = pend.reshape(len(active), d, d)
        bad = pex.reshape(len(active), d).any(axis=1)
        J = np.swapaxes((pend - ea[:, None, :]) / h[:, None, None], 1, 2)
        rhs = (targets[active] - ea)[..., None]
        delta = np.zeros_like(va)
        for a in np.flatnonzero(~bad):
            try:
                delta[a] = np.linalg.solve(J[a], rhs[a])[:, 0]
            except np.linalg.LinAlgError:
                delta[a] = np.linalg.lstsq(J[a], rhs[a], rcond=None)[0][:, 0]
        stalled[active[bad]] = True

        alpha = np.ones(len(active))
        pending = ~bad
        for _ in range(12):
            sel = np.flatnonzero(pending)
            if sel.size == 0:
                break
            trial = va[sel] + alpha[sel, None] * delta[sel]
            tend, tex = _endpoints(fld, x, trial, step)
            tres = _miss(tend, tex, targets[active[sel]])
            better = tres < res[active[sel]]
            acc = active[sel[better]]
            v[acc], end[acc], res[acc] = trial[better], tend[better], tres[better]
            pending[sel[better]] = False
            alpha[sel[~better]] *= 0.5
        stalled[active[pending]] = True
    return v, res, res <= tol


@dataclass(frozen=True, eq=False)
class ShootingSolution:
    """Converged connecting geodesics from one source to many targets."""

    lengths: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    velocities: np.ndarray

    def best(self, i: int) -> Tuple[float, float, Optional[np.ndarray]]:
        ok = np.flatnonzero(self.converged[i])
        if ok.size == 0:
            return math.inf, float(np.min(self.residuals[i])), None
        j = ok[np.argmin(self.lengths[i, ok])]
        return float(self.lengths[i, j]), float(self.residuals[i, j]), self.velocities[i, j]


def solve_targets(fld: MetricField, x, targets, tol: Optional[float] = None, starts: Optional[int] = None,
                  refine: Optional[int] = None, step: Optional[float] = None) -> ShootingSolution:
    """Multi-start shooting from x to every target.

    Candidates per target are the chart chord, the graph warm start and a
    fan of `starts` directions scaled to the graph length. All candidates
    are screened with one batched shot; the `refine` best are polished by
    damped Newton.
    """
    cfg = get_config()
    tol = cfg.tol if tol is None else tol
    starts = cfg.starts if starts is None else starts
    refine = cfg.refine if refine is None else refine
    step = cfg.step if step is None else step
    if tol <= 0 or step <= 0 or starts < 1 or refine < 1:
        raise ArgumentError("tol and step must be positive; starts and refine at least 1")
    x = np.asarray(x, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    P, d = targets.shape

    gx = fld._evaluate(fld._clamp(x[None, :]), derivatives=False)[0][0]
    chord = targets - x
    if fld.is_periodic:
        glen = segment_lengths(fld, np.repeat(x[None, :], P, axis=0), targets)
        warm = chord
    else:
        graph, extra, (dist, pred), ids = _graph_from(fld, x, targets, predecessors=True)
        allpts = np.vstack([graph.points, extra])
        glen = dist[ids[1:]]
        warm = np.empty_like(chord)
        for i, t in enumerate(ids[1:]):
            path = _walk(pred, ids[0], t)
            w = allpts[path[min(len(path) - 1, 3)]] - x
            warm[i] = w if np.any(w) else chord[i]
        wl = np.sqrt(np.einsum("bi,ij,bj->b", warm, gx, warm))
        warm = warm * (glen / np.maximum(wl, 1e-300))[:, None]
    fan = _fan(d, starts)
    fl = np.sqrt(np.einsum("bi,ij,bj->b", fan, gx, fan))
    fans = glen[:, None, None] * (fan / fl[:, None])[None, :, :]
    cand = np.concatenate([chord[:, None, :], warm[:, None, :], fans], axis=1)
    C = cand.shape[1]

    end, exited = _endpoints(fld, x, cand.reshape(-1, d), step)
    miss = _miss(end, exited, np.repeat(targets, C, axis=0)).reshape(P, C)
    keep = min(refine, C)
    order = np.argsort(miss, axis=1, kind="stable")[:, :keep]
    v0 = np.take_along_axis(cand, order[..., None], axis=1).reshape(-1, d)
    v, res, conv = _newton(fld, x, v0, np.repeat(targets, keep, axis=0), tol, step, cfg.newton_iterations)
    lengths = np.sqrt(np.einsum("bi,ij,bj->b", v, gx, v))
    same = np.linalg.norm(chord, axis=1) == 0.0
    lengths = lengths.reshape(P, keep)
    res = res.reshape(P, keep)
    conv = conv.reshape(P, keep)
    lengths[same], res[same], conv[same] = 0.0, 0.0, True
    return ShootingSolution(lengths, res, conv, v.reshape(P, keep, d))


def _check_point(fld: MetricField, pt: np.ndarray, name: str):
    if pt.shape != (fld.dim,):
        raise ArgumentError(f"{name} must have dimension {fld.dim}, got shape {pt.shape}")
    if not fld.contains(pt, slack=1e-9):
        raise ArgumentError(f"{name} = {pt.tolist()} lies outside the closed domain")


def distances_from(fld: MetricField, x, targets, tol: Optional[float] = None, starts: Optional[int] = None,
                   step: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Geodesic distances from x to each target, with endpoint residuals."""
    x = np.asarray(x, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    _check_point(fld, x, "x")
    for t in targets:
        _check_point(fld, t, "target")
    sol = solve_targets(fld, x, targets, tol=tol, starts=starts, step=step)
    lengths = np.empty(len(targets))
    residuals = np.empty(len(targets))
    for i in range(len(targets)):
        lengths[i], residuals[i], v = sol.best(i)
        if v is None:
            raise NonconvergenceError(
                f"No shooting start reached {targets[i].tolist()} from {x.tolist()} "
                f"(best residual {residuals[i]:.3e})",
                best_residual=residuals[i],
                pair=(x.tolist(), targets[i].tolist()),
            )
    return lengths, residuals


def distance(fld: MetricField, x, y, tol: Optional[float] = None, starts: Optional[int] = None,
             step: Optional[float] = None) -> Tuple[float, GeodesicPath]:
    """Length of the shortest connecting geodesic found, and its path."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_point(fld, x, "x")
    _check_point(fld, y, "y")
    step = get_config().step if step is None else step
    if np.array_equal(x, y):
        return 0.0, GeodesicPath(np.zeros(1), x[None, :], np.zeros((1, fld.dim)), np.zeros(1))
    sol = solve_targets(fld, x, y[None, :], tol=tol, starts=starts, step=step)
    length, residual, v = sol.best(0)
    if v is None:
        raise NonconvergenceError(
            f"No shooting start connected {x.tolist()} to {y.tolist()} (best residual {residual:.3e})",
            best_residual=residual,
            pair=(x.tolist(), y.tolist()),
        )
    limit = None if fld.is_periodic else fld.outer_radius
    _, _, _, (xs, ps, dt) = _integrate(fld, x, v[None, :], 1.0, step, limit, record=True)
    get_logger().debug(f"distance {x.tolist()} -> {y.tolist()}: {length:.12g} (residual {residual:.2e})")
    return length, _path_from_trajectory(fld, xs[:, 0, :], ps[:, 0, :], dt, False)


# Quadrature

def riemannian_volume(fld: MetricField, radial: int = 64, angular: int = 128) -> float:
    """Integral of sqrt(det g) over the domain (over the unit cell for periodic fields)."""
    if fld.is_periodic:
        t = (np.arange(angular) + 0.5) / angular
        pts = np.stack([a.reshape(-1) for a in np.meshgrid(t, t, indexing="ij")], axis=1)
        G, _ = fld._evaluate(pts, derivatives=False)
        return float(np.sqrt(np.linalg.det(G)).mean())
    nodes, weights = np.polynomial.legendre.leggauss(radial)
    R = fld.radius
    r = 0.5 * R * (nodes + 1.0)
    wr = 0.5 * R * weights
    if fld.dim == 2:
        theta = 2 * math.pi * np.arange(angular) / angular
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        wa = np.full(angular, 2 * math.pi / angular)
        jac = r
    else:
        cnodes, cweights = np.polynomial.legendre.leggauss(angular // 2)
        phi = 2 * math.pi * np.arange(angular) / angular
        ct, ph = np.meshgrid(cnodes, phi, indexing="ij")
        st = np.sqrt(1 - ct ** 2)
        dirs = np.column_stack([(st * np.cos(ph)).ravel(), (st * np.sin(ph)).ravel(), ct.ravel()])
        wa = (cweights[:, None] * np.full(angular, 2 * math.pi / angular)[None, :]).ravel()
        jac = r ** 2
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, fld.dim)
    G, _ = fld._evaluate(pts, derivatives=False)
    dens = np.sqrt(np.linalg.det(G)).reshape(len(r), len(dirs))
    return float(np.einsum("r,ra,a->", wr * jac, dens, wa))


def boundary_points(fld: MetricField, p: int) -> Tuple[np.ndarray, np.ndarray]:
    """p boundary nodes uniform in angle, and their angles."""
    if fld.is_periodic:
        raise ArgumentError("Periodic fields have no boundary")
    if fld.dim != 2:
        raise UnsupportedDimensionError("Boundary tables are built for planar discs")
    theta = 2 * math.pi * np.arange(p) / p
    return fld.radius * np.column_stack([np.cos(theta), np.sin(theta)]), theta


def _boundary_pieces(fld: MetricField, p: int, order: int = 8) -> np.ndarray:
    boundary_points(fld, p)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    seg = 2 * math.pi / p
    t = (seg * np.arange(p))[:, None] + 0.5 * seg * (nodes + 1.0)[None, :]
    c = fld.radius * np.stack([np.cos(t), np.sin(t)], axis=-1).reshape(-1, 2)
    dc = fld.radius * np.stack([-np.sin(t), np.cos(t)], axis=-1).reshape(-1, 2)
    speeds = fld.speed(c, dc).reshape(p, order)
    return 0.5 * seg * speeds @ weights


def boundary_arc_parameters(fld: MetricField, p: int) -> np.ndarray:
    """g-arc-length from angle 0 to each of the p boundary nodes."""
    return np.concatenate([[0.0], np.cumsum(_boundary_pieces(fld, p))[:-1]])


def boundary_length(fld: MetricField) -> float:
    return float(_boundary_pieces(fld, 64).sum())


# Boundary distance tables

@dataclass(frozen=True, eq=False)
class BoundaryDistanceTable:
    boundary_nodes: np.ndarray
    values: np.ndarray
    residuals: np.ndarray
    discrepancy: np.ndarray
    angles: np.ndarray
    arc_parameters: np.ndarray

    @property
    def size(self) -> int:
        return len(self.boundary_nodes)

    @property
    def max_discrepancy(self) -> float:
        return float(self.discrepancy.max())

    def triangle_defect(self) -> float:
        """max over triples of D_ij - D_ik - D_kj (<= 0 for a metric)."""
        D = self.values
        # axes (i, k, j)
        return float(np.max(D[:, None, :] - D[:, :, None] - D[None, :, :]))

    def domination_margin(self, other: np.ndarray) -> float:
        """min over pairs of self - other; >= 0 when this table dominates."""
        return float(np.min(self.values - np.asarray(other)))

    def to_frame(self) -> pd.DataFrame:
        labels = [f"{t:.12g}" for t in self.angles]
        return pd.DataFrame(self.values, index=labels, columns=labels)

    def metadata_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "angle": self.angles,
            "arc_length": self.arc_parameters,
            "x": self.boundary_nodes[:, 0],
            "y": self.boundary_nodes[:, 1],
            "max_residual": self.residuals.max(axis=1),
            "max_discrepancy": self.discrepancy.max(axis=1),
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, float_format="%.12g", index_label="angle")


def boundary_distance_table(fld: MetricField, p: int, tol: Optional[float] = None,
                            threads: Optional[int] = None) -> BoundaryDistanceTable:
    """p x p table of boundary geodesic distances, symmetrized by averaging."""
    if p < 8:
        raise ArgumentError(f"Boundary tables need p >= 8, got {p}")
    nodes, theta = boundary_points(fld, p)
    log = get_logger()
    log.debug(f"Building {p}x{p} boundary table for {fld.describe()}")
    _disc_graph(fld)

    def row(i: int):
        others = [j for j in range(p) if j != i]
        lengths, residuals = distances_from(fld, nodes[i], nodes[others], tol=tol)
        return i, others, lengths, residuals

    raw = np.zeros((p, p))
    res = np.zeros((p, p))
    for i, others, lengths, residuals in parallel_map(row, range(p), threads):
        raw[i, others] = lengths
        res[i, others] = residuals
    values = 0.5 * (raw + raw.T)
    np.fill_diagonal(values, 0.0)
    discrepancy = np.abs(raw - raw.T)
    worst = float(discrepancy.max())
    if worst > 1e3 * (get_config().tol if tol is None else tol):
        log.warning(f"Boundary table symmetrization discrepancy {worst:.3e}")
    return BoundaryDistanceTable(nodes, values, res, discrepancy, theta, boundary_arc_parameters(fld, p))


# Simplicity

@dataclass(frozen=True)
class SimplicityReport:
    boundary_convexity: float
    convexity_location: Tuple[float, ...]
    conjugate_point_free: bool
    conjugate_location: Optional[Dict]
    minimizing: Optional[bool]
    worst_multiplicity: int
    inconclusive_pairs: int
    seed: int
    samples: int
    margin_note: str = "extension margin (larger manifold) not certified; conjugate points tested inside the domain only"

    @property
    def simple(self) -> bool:
        return self.boundary_convexity > 0 and self.conjugate_point_free and self.minimizing is True

    @property
    def verdict(self) -> str:
        if self.minimizing is None and self.boundary_convexity > 0 and self.conjugate_point_free:
            return "inconclusive"
        return "simple" if self.simple else "not simple"

    def to_dict(self) -> Dict:
        return {
            "boundary_convexity": self.boundary_convexity,
            "convexity_location": list(self.convexity_location),
            "conjugate_point_free": self.conjugate_point_free,
            "conjugate_location": self.conjugate_location,
            "minimizing": self.minimizing,
            "worst_multiplicity": self.worst_multiplicity,
            "inconclusive_pairs": self.inconclusive_pairs,
            "seed": self.seed,
            "samples": self.samples,
            "verdict": self.verdict,
            "margin_note": self.margin_note,
        }


def christoffel(fld: MetricField, x: np.ndarray) -> np.ndarray:
    """Gamma[b, k, i, j] = Christoffel symbols of the second kind."""
    g, dg = fld._evaluate(np.atleast_2d(x))
    low = 0.5 * (np.einsum("bijl->blij", dg) + np.einsum("bjil->blij", dg) - dg)
    return np.einsum("bkl,blij->bkij", np.linalg.inv(g), low)


def _tangent_frames(x: np.ndarray) -> np.ndarray:
    if x.shape[1] == 2:
        t = np.column_stack([-x[:, 1], x[:, 0]])
        return (t / np.linalg.norm(t, axis=1, keepdims=True))[:, :, None]
    n = x / np.linalg.norm(x, axis=1, keepdims=True)
    helper = np.where(np.abs(n[:, [0]]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return np.stack([t1, t2], axis=2)


def boundary_convexity(fld: MetricField, samples: int) -> Tuple[float, np.ndarray]:
    """Minimum principal curvature of the boundary sphere |x| = R, and where it occurs.

    The boundary is the level set of f = |x|^2 / 2; its second fundamental
    form with respect to the inward normal is Hess_g f / |df|_g restricted
    to the tangent space, with eigenvalues taken against the induced metric.
    """
    if fld.dim == 2:
        theta = 2 * math.pi * np.arange(samples) / samples
        x = fld.radius * np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        x = fld.radius * fibonacci_sphere(samples)
    g, _ = fld._evaluate(x, derivatives=False)
    gamma = christoffel(fld, x)
    hess = np.eye(fld.dim)[None] - np.einsum("bkij,bk->bij", gamma, x)
    grad = np.sqrt(np.einsum("bi,bij,bj->b", x, np.linalg.inv(g), x))
    frames = _tangent_frames(x)
    second = np.einsum("bia,bij,bjc->bac", frames, hess, frames) / grad[:, None, None]
    induced = np.einsum("bia,bij,bjc->bac", frames, g, frames)
    lowest = np.array([eigh(second[b], induced[b], eigvals_only=True)[0] for b in range(len(x))])
    k = int(np.argmin(lowest))
    return float(lowest[k]), x[k]


def _length_scale(fld: MetricField) -> float:
    """Upper bound for the length of geodesics that stay in the domain long enough to matter."""
    R = fld.radius
    diam = segment_lengths(fld, np.array([[-R] + [0.0] * (fld.dim - 1)]), np.array([[R] + [0.0] * (fld.dim - 1)]))[0]
    if fld.dim == 2:
        return 3.0 * (diam + boundary_length(fld))
    return 3.0 * math.pi * diam


def conjugate_scan(fld: MetricField, samples: int, rng: np.random.Generator,
                   step: Optional[float] = None) -> Optional[Dict]:
    """Detect a sign change of the Jacobi determinant along sampled boundary geodesics.

    Geodesics start at boundary samples with unit speed into the domain;
    Jacobi fields vanishing at the start are taken as finite differences of
    neighbouring geodesics. Returns the first conjugate point found, if any.
    """
    step = get_config().step if step is None else step
    d = fld.dim
    if d == 2:
        theta = 2 * math.pi * np.arange(samples) / samples
        starts = fld.radius * np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        starts = fld.radius * fibonacci_sphere(samples)
    inward = -starts / np.linalg.norm(starts, axis=1, keepdims=True)
    frames = _tangent_frames(starts)
    tilt = rng.uniform(-0.45 * math.pi, 0.45 * math.pi, size=(samples, d - 1)) / math.sqrt(d - 1)
    base_dir = inward + np.einsum("bia,ba->bi", frames, np.tan(tilt))

    def unit(v):
        return v / fld.speed(starts, v)[:, None]

    dirs = [unit(base_dir)]
    for a in range(d - 1):
        dirs.append(unit(base_dir + _JACOBI_ANGLE * frames[:, :, a] * np.linalg.norm(base_dir, axis=1, keepdims=True)))
    v0 = np.concatenate(dirs, axis=0)
    x = np.tile(starts, (d, 1))
    g0, _ = fld._evaluate(x, derivatives=False)
    p = np.einsum("bij,bj->bi", g0, v0)
    T = _length_scale(fld)
    alive = np.ones(samples, dtype=bool)
    sign0 = np.zeros(samples)
    t = 0.0
    limit = fld.radius * (1 + 1e-9)
    for _ in range(_MAX_ADAPTIVE_STEPS):
        if t >= T or not alive.any():
            break
        idx = np.flatnonzero(np.tile(alive, d))
        vel, _ = _flow(fld, x[idx], p[idx])
        dt = step / max(1.0, float(np.linalg.norm(vel, axis=1).max()))
        x[idx], p[idx] = _rk4(fld, x[idx], p[idx], dt)
        t += dt
        xs = x.reshape(d, samples, d)
        out = np.any(np.linalg.norm(xs, axis=2) > limit, axis=0)
        alive &= ~out
        vel_base, _ = _flow(fld, xs[0], p[:samples])
        jac = [(xs[a + 1] - xs[0]) / _JACOBI_ANGLE for a in range(d - 1)]
        det = np.linalg.det(np.stack([vel_base] + jac, axis=2))
        scale = np.linalg.norm(vel_base, axis=1) * np.prod([np.linalg.norm(j, axis=1) for j in jac], axis=0)
        significant = np.abs(det) > 1e-6 * np.maximum(scale, 1e-300)
        fresh = alive & (sign0 == 0) & significant & (t > 10 * step)
        sign0[fresh] = np.sign(det[fresh])
        flipped = alive & (sign0 != 0) & significant & (np.sign(det) == -sign0)
        if flipped.any():
            k = int(np.flatnonzero(flipped)[0])
            return {"start": starts[k].tolist(), "point": xs[0, k].tolist(), "arc_length": t}
    return None


def _distinct_geodesics(sol: ShootingSolution, i: int) -> List[float]:
    lengths, seen = [], []
    for j in np.flatnonzero(sol.converged[i]):
        v = sol.velocities[i, j]
        if any(np.linalg.norm(v - w) <= 1e-6 * max(1.0, np.linalg.norm(w)) for w in seen):
            continue
        seen.append(v)
        lengths.append(float(sol.lengths[i, j]))
    return sorted(lengths)


def simplicity_check(fld: MetricField, samples: int = 100, seed: int = 0) -> SimplicityReport:
    """Convex boundary, no conjugate points, and minimizing geodesics, tested numerically."""
    if samples < 100:
        raise ArgumentError(f"simplicity_check needs samples >= 100, got {samples}")
    if fld.is_periodic:
        raise ArgumentError("Simplicity is defined for fields on a disc")
    log = get_logger()
    rng = np.random.default_rng(seed)
    cfg = get_config()

    convexity, where = boundary_convexity(fld, samples)
    log.debug(f"Boundary convexity {convexity:.6g} at {where.tolist()}")
    conjugate = conjugate_scan(fld, samples, rng)
    if conjugate:
        log.debug(f"Conjugate point near {conjugate['point']} at arc length {conjugate['arc_length']:.4f}")

    worst, inconclusive, minimizing = 1, 0, True
    pairs = max(1, samples // 10)
    if fld.dim == 2:
        angles = rng.uniform(0, 2 * math.pi, size=(pairs, 2))
        ends = fld.radius * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    else:
        raw = rng.normal(size=(pairs, 2, 3))
        ends = fld.radius * raw / np.linalg.norm(raw, axis=2, keepdims=True)
    length_tol = max(1e3 * cfg.tol, 1e-6)
    for a, b in ends:
        if np.linalg.norm(a - b) < 1e-3 * fld.radius:
            continue
        sol = solve_targets(fld, a, b[None, :], refine=max(cfg.refine, 8))
        found = _distinct_geodesics(sol, 0)
        if not found:
            continue
        worst = max(worst, len(found))
        if len(found) > 1:
            if found[1] - found[0] <= length_tol:
                inconclusive += 1
            else:
                minimizing = False
    if minimizing and inconclusive:
        minimizing = None
    return SimplicityReport(
        boundary_convexity=convexity,
        convexity_location=tuple(where.tolist()),
        conjugate_point_free=conjugate is None,
        conjugate_location=conjugate,
        minimizing=minimizing,
        worst_multiplicity=worst,
        inconclusive_pairs=inconclusive,
        seed=seed,
        samples=samples,
    )
