"""Numeric helpers shared by the test suites of every app."""

import numpy as np

from structure.system import Box, build_system


def central_difference(function, x: np.ndarray, h: float) -> np.ndarray:
    """Gradient of a scalar ``function`` at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    gradient = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus = x.copy()
        minus = x.copy()
        plus[index] += h
        minus[index] -= h
        gradient[index] = (function(plus) - function(minus)) / (2.0 * h)
    return gradient


def relative_error(actual, expected) -> float:
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(np.max(np.abs(expected)), 1e-12)
    return float(np.max(np.abs(actual - expected)) / scale)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_reduced_box(rng: np.random.Generator, low=8.0, high=14.0) -> Box:
    ax, by, cz = rng.uniform(low, high, size=3)
    vectors = np.array(
        [
            [ax, 0.0, 0.0],
            [rng.uniform(-0.5, 0.5) * ax, by, 0.0],
            [rng.uniform(-0.5, 0.5) * ax, rng.uniform(-0.5, 0.5) * by, cz],
        ]
    )
    return Box.triclinic(vectors)


def random_cluster(
    rng: np.random.Generator,
    n_atoms: int,
    species=(1, 6, 7, 8),
    spread: float = 3.0,
    min_distance: float = 0.8,
    batch=None,
    box=None,
    charges: bool = False,
):
    """Atoms in a cube of edge ``spread`` with no pair closer than ``min_distance``."""
    positions = []
    while len(positions) < n_atoms:
        candidate = rng.uniform(0.0, spread, size=3)
        if all(np.linalg.norm(candidate - p) >= min_distance for p in positions):
            positions.append(candidate)
    return build_system(
        np.array(positions),
        rng.choice(species, size=n_atoms),
        batch=batch,
        box=box,
        charges=rng.uniform(-0.5, 0.5, size=n_atoms) if charges else None,
    )


def brute_force_pairs(system, cutoff_upper: float, cutoff_lower: float = 0.0):
    """Reference pairs i < j from a scan over all 27 lattice images."""
    shifts = np.zeros((1, 3))
    if system.is_periodic:
        a, b, c = system.box.vectors
        shifts = np.array(
            [
                i * a + j * b + k * c
                for i in (-1, 0, 1)
                for j in (-1, 0, 1)
                for k in (-1, 0, 1)
            ]
        )
    pairs, distances = [], []
    for i in range(system.n_atoms - 1):
        others = np.arange(i + 1, system.n_atoms)
        others = others[system.batch[others] == system.batch[i]]
        delta = system.positions[i] - system.positions[others]
        d = np.linalg.norm(delta[:, None, :] + shifts[None, :, :], axis=2).min(axis=1)
        keep = (d > cutoff_lower) & (d <= cutoff_upper)
        pairs.extend((i, j) for j in others[keep])
        distances.extend(d[keep])
    return np.array(pairs, dtype=np.int64).reshape(-1, 2), np.array(distances)
