from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from structure.system import System


def segment_sum(values: np.ndarray, segments: np.ndarray, size: int) -> np.ndarray:
    """Sum ``values`` into ``size`` bins along the first axis."""
    out = np.zeros((size,) + values.shape[1:], dtype=np.float64)
    np.add.at(out, segments, values)
    return out


@dataclass(frozen=True, eq=False)
class EnergyForces:
    """Per-sample energies (eV), forces (eV/Å) and optional per-atom energies."""

    energy: np.ndarray
    forces: np.ndarray | None = None
    per_atom_energy: np.ndarray | None = None

    @classmethod
    def zeros(cls, system: System, derivative: bool = True) -> EnergyForces:
        return cls(
            energy=np.zeros(system.n_samples),
            forces=np.zeros((system.n_atoms, 3)) if derivative else None,
            per_atom_energy=np.zeros(system.n_atoms),
        )

    @classmethod
    def from_per_atom(
        cls, system: System, per_atom: np.ndarray, forces: np.ndarray | None
    ) -> EnergyForces:
        return cls(
            energy=segment_sum(per_atom, system.batch, system.n_samples),
            forces=forces,
            per_atom_energy=per_atom,
        )

    def without_forces(self) -> EnergyForces:
        return EnergyForces(self.energy, None, self.per_atom_energy)

    def __add__(self, other: EnergyForces) -> EnergyForces:
        if not isinstance(other, EnergyForces):
            return NotImplemented
        forces = None
        if self.forces is not None and other.forces is not None:
            forces = self.forces + other.forces
        per_atom = None
        if self.per_atom_energy is not None and other.per_atom_energy is not None:
            per_atom = self.per_atom_energy + other.per_atom_energy
        return EnergyForces(self.energy + other.energy, forces, per_atom)
