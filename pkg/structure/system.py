from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from django.db import models
from django.utils.translation import gettext_lazy as _

from common.exceptions import SystemValidationError

# Relative slack for the reduced-box inequalities.
REDUCED_TOLERANCE = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class BoxKind(models.TextChoices):
    NONE = "none", _("NONE")
    ORTHORHOMBIC = "orthorhombic", _("ORTHORHOMBIC")
    TRICLINIC = "triclinic", _("TRICLINIC")


@dataclass(frozen=True, eq=False)
class Box:
    """Simulation cell with lattice vectors as rows a, b, c (Å)."""

    kind: BoxKind = BoxKind.NONE
    vectors: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "vectors", _frozen(vectors))
        object.__setattr__(self, "kind", BoxKind(self.kind))
        self._validate()

    def _validate(self):
        v = self.vectors
        if self.kind == BoxKind.NONE:
            return
        if not np.all(np.isfinite(v)):
            raise SystemValidationError("malformed box: non-finite vectors")
        diagonal = np.diag(v)
        if np.any(diagonal <= 0):
            raise SystemValidationError("malformed box: diagonal must be positive")
        if self.kind == BoxKind.ORTHORHOMBIC:
            if np.any(v[~np.eye(3, dtype=bool)] != 0):
                raise SystemValidationError(
                    "malformed box: orthorhombic box has off-diagonal terms"
                )
            return
        ax, by = v[0, 0], v[1, 1]
        if v[0, 1] != 0 or v[0, 2] != 0 or v[1, 2] != 0:
            raise SystemValidationError("box not reduced: a must lie on x, b in xy")
        slack = 1.0 + REDUCED_TOLERANCE
        if (
            abs(v[1, 0]) > 0.5 * ax * slack
            or abs(v[2, 0]) > 0.5 * ax * slack
            or abs(v[2, 1]) > 0.5 * by * slack
        ):
            raise SystemValidationError("box not reduced")

    @classmethod
    def orthorhombic(cls, lx: float, ly: float | None = None, lz: float | None = None):
        ly = lx if ly is None else ly
        lz = lx if lz is None else lz
        return cls(BoxKind.ORTHORHOMBIC, np.diag([lx, ly, lz]))

    @classmethod
    def triclinic(cls, vectors) -> Box:
        return cls(BoxKind.TRICLINIC, vectors)

    @property
    def is_periodic(self) -> bool:
        return self.kind != BoxKind.NONE

    @property
    def volume(self) -> float:
        return float(np.prod(np.diag(self.vectors)))

    def perpendicular_widths(self) -> np.ndarray:
        """Distances between opposite faces, one per lattice direction."""
        a, b, c = self.vectors
        volume = self.volume
        return np.array(
            [
                volume / np.linalg.norm(np.cross(b, c)),
                volume / np.linalg.norm(np.cross(c, a)),
                volume / np.linalg.norm(np.cross(a, b)),
            ]
        )

    def max_cutoff(self) -> float:
        if not self.is_periodic:
            return np.inf
        return 0.5 * float(self.perpendicular_widths().min())

    def wrap(self, positions: np.ndarray) -> np.ndarray:
        """Map positions into the primary cell."""
        if not self.is_periodic:
            return np.array(positions, dtype=np.float64)
        fractional = positions @ np.linalg.inv(self.vectors)
        fractional -= np.floor(fractional)
        return fractional @ self.vectors

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.vectors, other.vectors)

    def __hash__(self):
        return hash((self.kind, self.vectors.tobytes()))


def minimum_image(delta, box: Box | None) -> np.ndarray:
    """Return the periodic image of ``delta`` with the smallest norm.

    Works on a single 3-vector or an (..., 3) array. Triclinic boxes are
    reduced sequentially along c, b, then a; this is exact while the true
    minimum image is shorter than half the smallest perpendicular width.
    """
    delta = np.array(delta, dtype=np.float64, copy=True)
    if box is None or box.kind == BoxKind.NONE:
        return delta
    a, b, c = box.vectors
    if box.kind == BoxKind.ORTHORHOMBIC:
        lengths = np.diag(box.vectors)
        delta -= lengths * np.round(delta / lengths)
        return delta
    delta -= np.round(delta[..., 2] / c[2])[..., None] * c
    delta -= np.round(delta[..., 1] / b[1])[..., None] * b
    delta -= np.round(delta[..., 0] / a[0])[..., None] * a
    return delta


@dataclass(frozen=True, eq=False)
class System:
    """Atoms of one or more samples; ``batch`` holds the sample index per atom."""

    positions: np.ndarray
    species: np.ndarray
    batch: np.ndarray
    box: Box | None = None
    charges: np.ndarray | None = None

    @property
    def n_atoms(self) -> int:
        return len(self.species)

    @property
    def n_samples(self) -> int:
        return int(self.batch[-1]) + 1

    @property
    def sample_sizes(self) -> np.ndarray:
        return np.bincount(self.batch, minlength=self.n_samples)

    @property
    def is_periodic(self) -> bool:
        return self.box is not None and self.box.is_periodic

    def with_positions(self, positions) -> System:
        return build_system(
            positions, self.species, self.batch, box=self.box, charges=self.charges
        )

    def sample(self, index: int) -> System:
        mask = self.batch == index
        charges = None if self.charges is None else self.charges[mask]
        return build_system(
            self.positions[mask], self.species[mask], box=self.box, charges=charges
        )

    @classmethod
    def concatenate(cls, systems: Sequence[System]) -> System:
        """Stack systems as consecutive samples of one batch."""
        if not systems:
            raise SystemValidationError("cannot concatenate zero systems")
        box = systems[0].box
        if any(s.box != box for s in systems[1:]):
            raise SystemValidationError("cannot batch systems with different boxes")
        has_charges = [s.charges is not None for s in systems]
        if any(has_charges) and not all(has_charges):
            raise SystemValidationError("either all or none of the systems carry charges")
        offsets = np.cumsum([0] + [s.n_samples for s in systems[:-1]])
        return build_system(
            np.concatenate([s.positions for s in systems]),
            np.concatenate([s.species for s in systems]),
            np.concatenate([s.batch + o for s, o in zip(systems, offsets)]),
            box=box,
            charges=(
                np.concatenate([s.charges for s in systems]) if all(has_charges) else None
            ),
        )


def build_system(positions, species, batch=None, box: Box | None = None, charges=None):
    positions = np.array(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise SystemValidationError(
            f"length mismatch: positions must be N×3, got shape {positions.shape}"
        )
    n_atoms = len(positions)
    if n_atoms < 1:
        raise SystemValidationError("a system needs at least one atom")
    if not np.all(np.isfinite(positions)):
        raise SystemValidationError("positions must be finite")

    species = np.array(species, dtype=np.int64).reshape(-1)
    if len(species) != n_atoms:
        raise SystemValidationError(
            f"length mismatch: {len(species)} species for {n_atoms} atoms"
        )
    if np.any(species < 0):
        raise SystemValidationError("species codes must be non-negative")

    if batch is None:
        batch = np.zeros(n_atoms, dtype=np.int64)
    batch = np.array(batch, dtype=np.int64).reshape(-1)
    if len(batch) != n_atoms:
        raise SystemValidationError(
            f"length mismatch: {len(batch)} batch codes for {n_atoms} atoms"
        )
    steps = np.diff(batch)
    if batch[0] != 0 or np.any((steps != 0) & (steps != 1)):
        raise SystemValidationError("non-contiguous batch codes")

    if charges is not None:
        charges = np.array(charges, dtype=np.float64).reshape(-1)
        if len(charges) != n_atoms:
            raise SystemValidationError(
                f"length mismatch: {len(charges)} charges for {n_atoms} atoms"
            )
        charges = _frozen(charges)

    if box is not None and not isinstance(box, Box):
        raise SystemValidationError("malformed box")

    return System(
        positions=_frozen(positions),
        species=_frozen(species),
        batch=_frozen(batch),
        box=box,
        charges=charges,
    )


def permute_system(system: System, order) -> System:
    """Reorder atoms; ``order`` must keep batch codes non-decreasing."""
    order = np.asarray(order)
    return build_system(
        system.positions[order],
        system.species[order],
        system.batch[order],
        box=system.box,
        charges=None if system.charges is None else system.charges[order],
    )


__all__ = [
    "Box",
    "BoxKind",
    "System",
    "build_system",
    "minimum_image",
    "permute_system",
]
