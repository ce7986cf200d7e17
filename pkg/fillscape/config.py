"""Lightweight configuration for solver defaults.

Holds the laboratory-wide numerical defaults, with simple environment
overrides (a .env file is honored when the CLI loads it).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional


def _default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


@dataclass(frozen=True)
class LabConfig:
    # Geodesic solver
    tol: float = 1e-9
    step: float = 1.0 / 64.0
    starts: int = 32
    refine: int = 3
    newton_iterations: int = 40
    graph_nodes: int = 41
    collar: float = 0.05
    # Convex geometry
    john_tol: float = 1e-10
    john_max_iter: int = 10_000
    sampling_directions: int = 64
    max_dim: int = 4
    # Parallelism
    threads: int = field(default_factory=_default_threads)

    def with_overrides(self, **overrides) -> "LabConfig":
        """Return a copy with the non-None overrides applied."""
        known = {f.name for f in fields(self)}
        clean = {k: v for k, v in overrides.items() if v is not None and k in known}
        return replace(self, **clean)


_ENV_OVERRIDES = {
    "threads": ("FILLSCAPE_THREADS", int),
    "tol": ("FILLSCAPE_TOL", float),
    "step": ("FILLSCAPE_STEP", float),
    "starts": ("FILLSCAPE_STARTS", int),
}

_active: Optional[LabConfig] = None


def load_config() -> LabConfig:
    """Load configuration: defaults, then environment overrides.

    Supported env vars:
    - FILLSCAPE_THREADS (int >= 1) caps parallelism
    - FILLSCAPE_TOL, FILLSCAPE_STEP (positive floats)
    - FILLSCAPE_STARTS (int >= 1)
    """
    return _apply_env_overrides(LabConfig())


def _apply_env_overrides(cfg: LabConfig) -> LabConfig:
    updates = {}
    for name, (var, cast) in _ENV_OVERRIDES.items():
        raw = os.getenv(var)
        if raw is None:
            continue
        try:
            val = cast(raw)
        except ValueError:
            continue
        if val <= 0:
            continue
        updates[name] = val
    return cfg.with_overrides(**updates)


def get_config() -> LabConfig:
    """Return the active configuration, loading it on first use."""
    global _active
    if _active is None:
        _active = load_config()
    return _active


def set_config(cfg: LabConfig) -> LabConfig:
    """Install cfg as the active configuration (the CLI does this after flags)."""
    global _active
    _active = cfg
    return cfg
