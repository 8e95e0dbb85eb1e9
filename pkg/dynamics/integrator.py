"""NVT Langevin dynamics in the "middle" splitting.

One step, with forces F cached from the previous step::

    v += dt F / m
    x += v dt / 2
    v  = c1 v + c2 sqrt(kT / m) xi,   c1 = exp(-gamma dt), c2 = sqrt(1 - c1^2)
    x += v dt / 2

then the neighbor list is rebuilt and F recomputed at the new positions.
Gaussian draws come from a Philox generator keyed by the seed with the step
index as counter, so trajectories do not depend on thread counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from common.exceptions import NonFiniteForcesError, SystemValidationError
from common.units import BOLTZMANN, EV_PER_AMU_TO_A2_PER_FS2, FS_PER_PS
from neighbors.engine import build_with_retry
from neighbors.types import NeighborSpec
from structure.elements import atomic_mass
from structure.energy import EnergyForces
from structure.system import System

logger = logging.getLogger(__name__)

# Counter block reserved for the initial velocity draw.
INITIAL_VELOCITY_COUNTER = 1 << 192


def masses_for(species) -> np.ndarray:
    return np.array([atomic_mass(int(z)) for z in species])


def philox_normal(seed: int, counter: int, shape) -> np.ndarray:
    generator = np.random.Generator(np.random.Philox(key=seed, counter=counter))
    return generator.standard_normal(shape)


def kinetic_energy(velocities: np.ndarray, masses: np.ndarray) -> float:
    """Kinetic energy in eV of velocities in Å/fs."""
    return float(
        0.5 * np.sum(masses[:, None] * velocities**2) / EV_PER_AMU_TO_A2_PER_FS2
    )


def instantaneous_temperature(velocities: np.ndarray, masses: np.ndarray) -> float:
    dof = 3 * len(masses)
    return 2.0 * kinetic_energy(velocities, masses) / (dof * BOLTZMANN)


def maxwell_boltzmann(masses: np.ndarray, temperature: float, seed: int) -> np.ndarray:
    """Velocities drawn at ``temperature`` with the centre-of-mass drift removed."""
    sigma = np.sqrt(BOLTZMANN * temperature / masses * EV_PER_AMU_TO_A2_PER_FS2)
    velocities = philox_normal(seed, INITIAL_VELOCITY_COUNTER, (len(masses), 3))
    velocities *= sigma[:, None]
    if len(masses) > 1:
        drift = (masses[:, None] * velocities).sum(axis=0) / masses.sum()
        velocities -= drift
    return velocities


@dataclass(eq=False)
class MDState:
    system: System
    velocities: np.ndarray
    masses: np.ndarray
    time: float = 0.0
    step: int = 0
    seed: int = 0
    spec: NeighborSpec | None = None
    energy_forces: EnergyForces | None = None

    def __post_init__(self):
        n = self.system.n_atoms
        if np.shape(self.velocities) != (n, 3) or np.shape(self.masses) != (n,):
            raise SystemValidationError("velocities and masses must match the atom count")
        if np.any(np.asarray(self.masses) <= 0):
            raise SystemValidationError("masses must be positive")

    @classmethod
    def initialize(
        cls,
        system: System,
        temperature: float,
        seed: int = 0,
        spec: NeighborSpec | None = None,
        velocities: np.ndarray | None = None,
        masses: np.ndarray | None = None,
    ) -> MDState:
        masses = masses_for(system.species) if masses is None else np.asarray(masses, float)
        if velocities is None:
            velocities = maxwell_boltzmann(masses, temperature, seed)
        return cls(system, np.array(velocities, dtype=np.float64), masses, seed=seed, spec=spec)

    @property
    def kinetic_energy(self) -> float:
        return kinetic_energy(self.velocities, self.masses)

    @property
    def temperature(self) -> float:
        return instantaneous_temperature(self.velocities, self.masses)


def compute_forces(state: MDState, potential, threads: int | None = None) -> MDState:
    """Rebuild the neighbor list and cache energy and forces at the current positions."""
    neighbors, spec = None, state.spec
    if spec is not None:
        neighbors, spec = build_with_retry(state.system, spec, threads=threads)
    result = potential.evaluate(state.system, neighbors)
    if result.forces is None:
        raise SystemValidationError("molecular dynamics needs a potential with derivative=true")
    if not np.all(np.isfinite(result.forces)):
        raise NonFiniteForcesError(state.step)
    return replace(state, spec=spec, energy_forces=result)


def langevin_middle_step(
    state: MDState,
    potential,
    dt: float,
    temperature: float,
    gamma: float,
    threads: int | None = None,
) -> MDState:
    """Advance one step of ``dt`` fs at ``temperature`` K with friction ``gamma`` 1/ps."""
    if state.energy_forces is None:
        state = compute_forces(state, potential, threads)
    masses = state.masses[:, None]
    acceleration = state.energy_forces.forces / masses * EV_PER_AMU_TO_A2_PER_FS2

    velocities = state.velocities + dt * acceleration
    positions = state.system.positions + 0.5 * dt * velocities
    c1 = np.exp(-gamma / FS_PER_PS * dt)
    if c1 < 1.0:
        c2 = np.sqrt(1.0 - c1 * c1)
        sigma = np.sqrt(BOLTZMANN * temperature / masses * EV_PER_AMU_TO_A2_PER_FS2)
        noise = philox_normal(state.seed, state.step << 64, velocities.shape)
        velocities = c1 * velocities + c2 * sigma * noise
    positions = positions + 0.5 * dt * velocities

    if not np.all(np.isfinite(positions)):
        raise NonFiniteForcesError(state.step)
    moved = replace(
        state,
        system=state.system.with_positions(positions),
        velocities=velocities,
        time=state.time + dt,
        step=state.step + 1,
        energy_forces=None,
    )
    return compute_forces(moved, potential, threads)
