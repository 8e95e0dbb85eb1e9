from __future__ import annotations

import numpy as np

from common.exceptions import ConfigError, ElementError, SystemValidationError
from common.units import BOHR_RADIUS, COULOMB_CONSTANT
from neighbors.pullback import distance_pullback
from neighbors.types import NeighborList
from potential.functional import cosine_cutoff_with_grad
from priors import tables
from structure.energy import EnergyForces, segment_sum
from structure.system import System


class Prior:
    """Base class of analytic energy terms.

    Subclasses implement ``energy_forces``; anything with that method can be
    placed in a PriorStack.
    """

    name = "prior"

    def energy_forces(
        self, system: System, neighbors: NeighborList | None, derivative: bool = True
    ) -> EnergyForces:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


class Atomref(Prior):
    """Per-element reference energies, optionally trainable."""

    name = "atomref"

    def __init__(self, table: dict[int, float], learnable: bool = False):
        self.elements = np.array(sorted(int(z) for z in table), dtype=np.int64)
        self.values = np.array([float(table[z]) for z in self.elements])
        self.learnable = learnable

    @property
    def table(self) -> dict[int, float]:
        return {int(z): float(v) for z, v in zip(self.elements, self.values)}

    def _slots(self, species: np.ndarray) -> np.ndarray:
        slots = np.searchsorted(self.elements, species)
        slots = np.minimum(slots, max(len(self.elements) - 1, 0))
        missing = (
            species if len(self.elements) == 0 else species[self.elements[slots] != species]
        )
        if len(missing):
            raise ElementError(f"missing reference for element {int(missing[0])}")
        return slots

    def energy_forces(self, system, neighbors=None, derivative=True):
        per_atom = self.values[self._slots(system.species)]
        forces = np.zeros((system.n_atoms, 3)) if derivative else None
        return EnergyForces.from_per_atom(system, per_atom, forces)

    def parameter_gradient(self, system: System, upstream) -> np.ndarray:
        """Gradient of Σ_s upstream_s E_s: per-sample element counts."""
        upstream = np.asarray(upstream, dtype=np.float64)
        slots = self._slots(system.species)
        return np.bincount(
            slots, weights=upstream[system.batch], minlength=len(self.elements)
        )

    def describe(self):
        return {"name": self.name, "table": self.table, "learnable": self.learnable}


class PairPrior(Prior):
    """A term summed over neighbor pairs; forces come from the distance pullback."""

    def pair_energy(self, zi, zj, qi, qj, d, cutoff_upper: float):
        """Return pair energies and their derivatives with respect to d."""
        raise NotImplementedError

    def energy_forces(self, system, neighbors, derivative=True):
        pairs = neighbors.pairs
        active = neighbors.valid & (pairs[:, 0] != pairs[:, 1])
        slots = np.flatnonzero(active)
        i, j = pairs[slots, 0], pairs[slots, 1]
        d = neighbors.distances[slots]
        if np.any(d == 0.0):
            k = np.flatnonzero(d == 0.0)[0]
            raise SystemValidationError(f"atoms {i[k]} and {j[k]} coincide")
        charges = system.charges
        qi = None if charges is None else charges[i]
        qj = None if charges is None else charges[j]
        energy, grad = self.pair_energy(
            system.species[i], system.species[j], qi, qj, d, neighbors.cutoff_upper
        )
        # every unordered pair appears twice in a full list
        weight = 0.5 if neighbors.full_list else 1.0
        half = 0.5 * weight * energy
        per_atom = segment_sum(half, i, system.n_atoms) + segment_sum(
            half, j, system.n_atoms
        )
        forces = None
        if derivative:
            d_grad = np.zeros(neighbors.capacity)
            d_grad[slots] = weight * grad
            forces = -distance_pullback(neighbors, d_grad)
        return EnergyForces.from_per_atom(system, per_atom, forces)


def coulomb_switch(d, switch_radius: float):
    """S(d) = ½(1 - cos(πd/r_s)) below r_s, 1 beyond, with dS/dd."""
    inside = d < switch_radius
    phase = np.pi * (d / switch_radius)
    value = np.where(inside, 0.5 * (1.0 - np.cos(phase)), 1.0)
    grad = np.where(inside, 0.5 * np.sin(phase) * np.pi / switch_radius, 0.0)
    return value, grad


class Coulomb(PairPrior):
    name = "coulomb"

    def __init__(self, switch_radius: float):
        if switch_radius <= 0:
            raise ConfigError("coulomb switch radius must be positive")
        self.switch_radius = float(switch_radius)

    def energy_forces(self, system, neighbors, derivative=True):
        if system.charges is None:
            raise SystemValidationError("the coulomb prior needs per-atom charges")
        return super().energy_forces(system, neighbors, derivative)

    def pair_energy(self, zi, zj, qi, qj, d, cutoff_upper):
        s, ds = coulomb_switch(d, self.switch_radius)
        k = COULOMB_CONSTANT * qi * qj
        return k * s / d, k * (ds / d - s / d**2)

    def describe(self):
        return {"name": self.name, "switch_radius": self.switch_radius}


def zbl_screening(x):
    value = np.zeros_like(x)
    grad = np.zeros_like(x)
    for coefficient, exponent in tables.ZBL_SCREENING:
        term = coefficient * np.exp(-exponent * x)
        value += term
        grad -= exponent * term
    return value, grad


class ZBL(PairPrior):
    """Screened nuclear repulsion between nuclei of charge Z_i, Z_j."""

    name = "zbl"

    def pair_energy(self, zi, zj, qi, qj, d, cutoff_upper):
        if np.any(zi <= 0) or np.any(zj <= 0):
            raise ElementError("ZBL needs atomic numbers >= 1")
        zi = zi.astype(np.float64)
        zj = zj.astype(np.float64)
        a = (
            tables.ZBL_LENGTH_PREFACTOR
            * BOHR_RADIUS
            / (zi**tables.ZBL_EXPONENT + zj**tables.ZBL_EXPONENT)
        )
        screen, screen_grad = zbl_screening(d / a)
        envelope, envelope_grad = cosine_cutoff_with_grad(d, 0.0, cutoff_upper)
        k = COULOMB_CONSTANT * zi * zj
        bare = screen / d
        bare_grad = screen_grad / (a * d) - screen / d**2
        return k * bare * envelope, k * (bare_grad * envelope + bare * envelope_grad)


class D2(PairPrior):
    """DFT-D2 dispersion with Fermi damping."""

    name = "d2"

    def __init__(
        self,
        s6: float = tables.D2_DEFAULT_S6,
        d_steep: float = tables.D2_DEFAULT_STEEPNESS,
        c6: dict[int, float] | None = None,
        radii: dict[int, float] | None = None,
    ):
        if s6 <= 0:
            raise ConfigError("d2 s6 must be positive")
        self.s6 = float(s6)
        self.d_steep = float(d_steep)
        self.c6 = dict(tables.D2_C6 if c6 is None else c6)
        self.radii = dict(tables.D2_R0_ANGSTROM if radii is None else radii)

    def _lookup(self, table: dict[int, float], species: np.ndarray) -> np.ndarray:
        missing = sorted(set(np.unique(species).tolist()) - set(table))
        if missing:
            raise ElementError(f"no D2 parameters for element {missing[0]}")
        return np.array([table[int(z)] for z in species], dtype=np.float64)

    def pair_c6(self, zi, zj) -> np.ndarray:
        return np.sqrt(self._lookup(self.c6, zi) * self._lookup(self.c6, zj))

    def pair_energy(self, zi, zj, qi, qj, d, cutoff_upper):
        c6 = self.pair_c6(zi, zj)
        r0 = self._lookup(self.radii, zi) + self._lookup(self.radii, zj)
        damping = 1.0 / (1.0 + np.exp(-self.d_steep * (d / r0 - 1.0)))
        damping_grad = self.d_steep / r0 * damping * (1.0 - damping)
        envelope, envelope_grad = cosine_cutoff_with_grad(d, 0.0, cutoff_upper)
        inv6 = d**-6
        energy = -self.s6 * c6 * inv6 * damping * envelope
        grad = -self.s6 * c6 * (
            -6.0 * inv6 / d * damping * envelope
            + inv6 * damping_grad * envelope
            + inv6 * damping * envelope_grad
        )
        return energy, grad

    def describe(self):
        return {"name": self.name, "s6": self.s6, "d_steep": self.d_steep}


def prior_atomref(system: System, table: dict[int, float], derivative: bool = True):
    return Atomref(table).energy_forces(system, None, derivative)


def prior_coulomb(
    system: System, neighbors: NeighborList, switch_radius: float = 1.0, derivative=True
):
    return Coulomb(switch_radius).energy_forces(system, neighbors, derivative)


def prior_zbl(system: System, neighbors: NeighborList, derivative: bool = True):
    return ZBL().energy_forces(system, neighbors, derivative)


def prior_d2(
    system: System,
    neighbors: NeighborList,
    s6: float = tables.D2_DEFAULT_S6,
    d_steep: float = tables.D2_DEFAULT_STEEPNESS,
    derivative: bool = True,
):
    return D2(s6=s6, d_steep=d_steep).energy_forces(system, neighbors, derivative)
