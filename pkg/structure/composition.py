from __future__ import annotations

from dataclasses import dataclass

from common.exceptions import ConfigError, NeighborListError
from neighbors.types import NeighborSpec, Strategy, capacity_for
from structure.energy import EnergyForces
from structure.system import System


@dataclass
class ComposedPotential:
    """A graph network and/or a prior stack evaluated on one neighbor list.

    ``cutoff_upper`` only matters for priors-only potentials; with a network
    the network's cutoff is authoritative.
    """

    network: object | None = None
    priors: object | None = None
    derivative: bool = True
    cutoff_upper: float | None = None

    def __post_init__(self):
        if self.network is None and (self.priors is None or len(self.priors) == 0):
            raise ConfigError("empty potential")

    @property
    def cutoff(self) -> float | None:
        if self.network is not None:
            return self.network.cutoff_upper
        return self.cutoff_upper

    @property
    def needs_full_list(self) -> bool:
        return self.network is not None

    @property
    def cutoff_lower(self) -> float:
        if self.network is not None:
            return self.network.cutoff_lower
        return 0.0

    def neighbor_spec(
        self,
        n_atoms: int,
        max_num_neighbors: int = 32,
        strategy: Strategy = Strategy.AUTO,
        deterministic: bool = True,
    ) -> NeighborSpec | None:
        """Neighbor request matching this potential, or None when nothing needs pairs."""
        if self.cutoff is None:
            return None
        return NeighborSpec(
            cutoff_upper=self.cutoff,
            cutoff_lower=self.cutoff_lower,
            capacity=capacity_for(n_atoms, max_num_neighbors),
            strategy=strategy,
            full_list=self.needs_full_list,
            deterministic=deterministic,
        )

    def evaluate(self, system: System, neighbors) -> EnergyForces:
        return evaluate(self, system, neighbors)


def evaluate(potential: ComposedPotential, system: System, neighbors) -> EnergyForces:
    """Network energy plus every prior term, per sample."""
    cutoff = potential.cutoff
    if neighbors is not None and cutoff is not None and neighbors.cutoff_upper != cutoff:
        raise NeighborListError(
            f"cutoff mismatch: potential uses {cutoff}, neighbor list {neighbors.cutoff_upper}"
        )
    result = EnergyForces.zeros(system, potential.derivative)
    if potential.network is not None:
        result = result + potential.network.evaluate(system, neighbors, potential.derivative)
    if potential.priors is not None:
        result = result + potential.priors.evaluate(system, neighbors, potential.derivative)
    return result
