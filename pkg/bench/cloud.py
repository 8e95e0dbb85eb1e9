from __future__ import annotations

import math

import numpy as np

from common.exceptions import ConfigError, GeometryError
from structure.system import Box, System, build_system


def cloud_edge(n: int, k: float, cutoff: float) -> float:
    """Cubic box edge giving ``k`` expected neighbors per particle within ``cutoff``."""
    return (n * 4.0 * math.pi * cutoff**3 / (3.0 * k)) ** (1.0 / 3.0)


def generate_cloud(n: int, k: float, cutoff: float, batches: int = 1, seed: int = 0) -> System:
    """Uniform random particles in a periodic cube, split contiguously into batches."""
    if not n >= batches >= 1:
        raise ConfigError(f"a cloud needs n >= batches >= 1, got n={n}, batches={batches}")
    if k <= 0 or cutoff <= 0:
        raise ConfigError("neighbors per particle and cutoff must be positive")
    edge = cloud_edge(n, k, cutoff)
    if cutoff > 0.5 * edge:
        raise GeometryError(
            f"box too small for cutoff: edge {edge:.4g} Å for cutoff {cutoff} Å "
            f"(lower neighbors_per_particle or raise the particle count)"
        )
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, edge, size=(n, 3))
    batch = np.arange(n) * batches // n
    return build_system(
        positions, np.ones(n, dtype=np.int64), batch, box=Box.orthorhombic(edge)
    )
