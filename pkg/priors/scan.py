"""Single-pair energy curves of a prior term."""

import csv
from dataclasses import dataclass

import numpy as np

from common.exceptions import ConfigError
from neighbors.engine import build_neighbor_list
from neighbors.types import NeighborSpec, Strategy
from priors.terms import Prior
from structure.system import build_system

PROFILE_HEADER = ("distance_angstrom", "energy_ev")


@dataclass(frozen=True, eq=False)
class PairEnergyProfile:
    distances: np.ndarray
    energies: np.ndarray


def dimer_scan(
    term: Prior,
    z_i: int,
    z_j: int,
    distances,
    q_i: float | None = None,
    q_j: float | None = None,
    cutoff_upper: float = 5.0,
) -> PairEnergyProfile:
    distances = np.asarray(distances, dtype=np.float64)
    if len(distances) == 0:
        raise ConfigError("dimer scan needs at least one distance")
    if np.any(distances <= 0) or np.any(distances > cutoff_upper):
        raise ConfigError(f"scan distances must lie in (0, {cutoff_upper}]")
    if np.any(np.diff(distances) <= 0):
        raise ConfigError("scan distances must be strictly increasing")

    # One two-atom sample per distance; batch masking keeps samples apart.
    n = len(distances)
    positions = np.zeros((2 * n, 3))
    positions[1::2, 0] = distances
    charges = None
    if q_i is not None or q_j is not None:
        charges = np.tile([q_i or 0.0, q_j or 0.0], n)
    system = build_system(
        positions,
        np.tile([z_i, z_j], n),
        np.repeat(np.arange(n), 2),
        charges=charges,
    )
    spec = NeighborSpec(cutoff_upper=cutoff_upper, capacity=n, strategy=Strategy.BRUTE)
    neighbors = build_neighbor_list(system, spec)
    result = term.energy_forces(system, neighbors, derivative=False)
    return PairEnergyProfile(distances=distances, energies=result.energy)


def write_profile_csv(profile: PairEnergyProfile, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(PROFILE_HEADER)
    for d, e in zip(profile.distances, profile.energies):
        writer.writerow([repr(float(d)), repr(float(e))])
