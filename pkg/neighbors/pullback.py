"""Analytic first and second order derivatives of pair distances.

With δ = r_i - r_j and u = δ/d, ∂d/∂r_i = u, ∂d/∂r_j = -u and the pair
Hessian block is (I - uuᵀ)/d.
"""

import numpy as np

from common.exceptions import SingularDistanceError
from neighbors.types import NeighborList
from structure.energy import segment_sum


def _active(neighbors: NeighborList):
    """Valid, non-loop pairs with their unit vectors."""
    active = neighbors.valid & (neighbors.pairs[:, 0] != neighbors.pairs[:, 1])
    slots = np.flatnonzero(active)
    i = neighbors.pairs[slots, 0]
    j = neighbors.pairs[slots, 1]
    distances = neighbors.distances[slots]
    zero = distances == 0.0
    if np.any(zero):
        first = np.flatnonzero(zero)[0]
        raise SingularDistanceError(int(i[first]), int(j[first]))
    unit = neighbors.deltas[slots] / distances[:, None]
    return slots, i, j, distances, unit


def _scatter_pair(values: np.ndarray, i, j, n_atoms: int) -> np.ndarray:
    return segment_sum(values, i, n_atoms) - segment_sum(values, j, n_atoms)


def distance_pullback(neighbors: NeighborList, d_grad) -> np.ndarray:
    """Σ_k d_grad_k ∂d_k/∂positions, shape (n_atoms, 3)."""
    d_grad = np.asarray(d_grad, dtype=np.float64)
    slots, i, j, _, unit = _active(neighbors)
    contribution = d_grad[slots, None] * unit
    return _scatter_pair(contribution, i, j, neighbors.n_atoms)


def distance_pullback_second(neighbors: NeighborList, d_grad, position_tangent):
    """Directional derivative of ``distance_pullback`` along a position tangent.

    Returns the (n_atoms, 3) second-order term and the (capacity,) tangent of
    the distances u·(t_i - t_j).
    """
    d_grad = np.asarray(d_grad, dtype=np.float64)
    tangent = np.asarray(position_tangent, dtype=np.float64)
    slots, i, j, distances, unit = _active(neighbors)

    relative = tangent[i] - tangent[j]
    along = np.einsum("kc,kc->k", unit, relative)
    hessian_dot = (relative - along[:, None] * unit) / distances[:, None]
    second = _scatter_pair(d_grad[slots, None] * hessian_dot, i, j, neighbors.n_atoms)

    distance_tangent = np.zeros(neighbors.capacity)
    distance_tangent[slots] = along
    return second, distance_tangent
