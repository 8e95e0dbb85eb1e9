from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from django.db import models
from django.utils.translation import gettext_lazy as _

from common.exceptions import ConfigError

SENTINEL = -1


class Strategy(models.TextChoices):
    BRUTE = "brute", _("BRUTE")
    CELL = "cell", _("CELL")
    AUTO = "auto", _("AUTO")


@dataclass(frozen=True)
class NeighborSpec:
    cutoff_upper: float
    capacity: int
    cutoff_lower: float = 0.0
    strategy: Strategy = Strategy.AUTO
    include_self_loops: bool = False
    full_list: bool = False
    deterministic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if not 0.0 <= self.cutoff_lower < self.cutoff_upper:
            raise ConfigError(
                f"cutoffs must satisfy 0 <= cutoff_lower < cutoff_upper, "
                f"got {self.cutoff_lower} and {self.cutoff_upper}"
            )
        if self.capacity < 1:
            raise ConfigError("neighbor capacity must be at least 1")

    @classmethod
    def from_run_config(cls, config, n_atoms: int, full_list: bool = False) -> NeighborSpec:
        """Spec sized by the ``max_num_neighbors`` heuristic."""
        return cls(
            cutoff_upper=config.cutoff_upper,
            cutoff_lower=config.cutoff_lower,
            capacity=capacity_for(n_atoms, config.max_num_neighbors),
            strategy=config.strategy,
            full_list=full_list,
            deterministic=config.deterministic,
        )

    def with_capacity(self, capacity: int) -> NeighborSpec:
        return NeighborSpec(
            cutoff_upper=self.cutoff_upper,
            capacity=capacity,
            cutoff_lower=self.cutoff_lower,
            strategy=self.strategy,
            include_self_loops=self.include_self_loops,
            full_list=self.full_list,
            deterministic=self.deterministic,
        )


def capacity_for(n_atoms: int, max_num_neighbors: int) -> int:
    return max(1, int(n_atoms) * int(max_num_neighbors))


@dataclass(frozen=True, eq=False)
class NeighborList:
    """Fixed-capacity pair list; slots from ``count`` on hold -1 sentinels.

    ``deltas`` are minimum-image displacements r_i - r_j.
    """

    pairs: np.ndarray
    deltas: np.ndarray
    distances: np.ndarray
    count: int
    n_atoms: int
    cutoff_upper: float
    cutoff_lower: float = 0.0
    full_list: bool = False
    strategy: Strategy = Strategy.BRUTE
    notices: tuple[str, ...] = field(default_factory=tuple)

    @property
    def capacity(self) -> int:
        return len(self.pairs)

    @property
    def valid(self) -> np.ndarray:
        return self.pairs[:, 0] != SENTINEL

    @property
    def self_loops(self) -> np.ndarray:
        return self.valid & (self.pairs[:, 0] == self.pairs[:, 1])


class CanonicalPairs(NamedTuple):
    pairs: np.ndarray
    distances: np.ndarray


def padded_list(
    i: np.ndarray,
    j: np.ndarray,
    deltas: np.ndarray,
    distances: np.ndarray,
    capacity: int,
    **kwargs,
) -> NeighborList:
    count = len(i)
    pairs = np.full((capacity, 2), SENTINEL, dtype=np.int64)
    padded_deltas = np.zeros((capacity, 3))
    padded_distances = np.zeros(capacity)
    pairs[:count, 0] = i
    pairs[:count, 1] = j
    padded_deltas[:count] = deltas
    padded_distances[:count] = distances
    for array in (pairs, padded_deltas, padded_distances):
        array.setflags(write=False)
    return NeighborList(
        pairs=pairs,
        deltas=padded_deltas,
        distances=padded_distances,
        count=count,
        **kwargs,
    )
