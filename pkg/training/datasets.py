from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from django.db import models
from django.utils.translation import gettext_lazy as _

from common.exceptions import ConfigError, DatasetFormatError
from structure.system import Box, System, build_system
from structure.xyz import frame_system, read_extxyz
from training.container import DATASET_MAGIC, read_container, write_container

logger = logging.getLogger(__name__)


class Source(models.TextChoices):
    EXTXYZ = "extxyz", _("EXTENDED XYZ")
    CONTAINER = "container", _("BINARY CONTAINER")
    MEMORY = "memory", _("IN MEMORY")


@dataclass(frozen=True, eq=False)
class Frame:
    positions: np.ndarray
    species: np.ndarray
    energy: float
    forces: np.ndarray | None = None
    box: Box | None = None

    @property
    def n_atoms(self) -> int:
        return len(self.species)

    def system(self) -> System:
        return build_system(self.positions, self.species, box=self.box)


class Dataset(Sequence):
    """Frames stored as flat per-atom arrays plus frame offsets.

    The arrays may be memory maps; a frame is only materialized when indexed.
    """

    def __init__(
        self,
        positions: np.ndarray,
        species: np.ndarray,
        energy: np.ndarray,
        offsets: np.ndarray,
        forces: np.ndarray | None = None,
        boxes: list[Box | None] | None = None,
        source: Source = Source.MEMORY,
    ):
        offsets = np.asarray(offsets, dtype=np.int64)
        n_frames = len(offsets) - 1
        if n_frames < 0 or offsets[0] != 0 or np.any(np.diff(offsets) < 1):
            raise DatasetFormatError("frame offsets must start at 0 and increase")
        total = int(offsets[-1])
        if np.shape(energy) != (n_frames,):
            raise DatasetFormatError(
                f"shape error: {np.shape(energy)[0] if np.ndim(energy) else 0} energies "
                f"for {n_frames} frames"
            )
        if np.shape(positions) != (total, 3) or np.shape(species) != (total,):
            raise DatasetFormatError(
                f"shape error: positions {np.shape(positions)} and species "
                f"{np.shape(species)} do not match {total} atoms"
            )
        if forces is not None and np.shape(forces) != (total, 3):
            raise DatasetFormatError(f"shape error: forces {np.shape(forces)}")
        if not np.all(np.isfinite(energy)):
            raise DatasetFormatError("energies must be finite")
        self.positions = positions
        self.species = species
        self.energy = energy
        self.forces = forces
        self.offsets = offsets
        self.boxes = boxes
        self.source = Source(source)

    @classmethod
    def from_frames(cls, frames: Sequence[Frame], source=Source.MEMORY) -> Dataset:
        if not frames:
            raise DatasetFormatError("a dataset needs at least one frame")
        has_forces = [f.forces is not None for f in frames]
        forces = None
        if all(has_forces):
            forces = np.concatenate([f.forces for f in frames])
        elif any(has_forces):
            raise DatasetFormatError("either every frame or none carries forces")
        boxes = [f.box for f in frames]
        return cls(
            positions=np.concatenate([f.positions for f in frames]),
            species=np.concatenate([f.species for f in frames]).astype(np.int64),
            energy=np.array([f.energy for f in frames], dtype=np.float64),
            offsets=np.concatenate([[0], np.cumsum([f.n_atoms for f in frames])]),
            forces=forces,
            boxes=boxes if any(b is not None for b in boxes) else None,
            source=source,
        )

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        index = int(index)
        if index < 0:
            index += len(self)
        start, stop = self.offsets[index], self.offsets[index + 1]
        return Frame(
            positions=np.array(self.positions[start:stop], dtype=np.float64),
            species=np.array(self.species[start:stop], dtype=np.int64),
            energy=float(self.energy[index]),
            forces=(
                None
                if self.forces is None
                else np.array(self.forces[start:stop], dtype=np.float64)
            ),
            box=None if self.boxes is None else self.boxes[index],
        )

    @property
    def has_forces(self) -> bool:
        return self.forces is not None

    @property
    def elements(self) -> np.ndarray:
        return np.unique(np.asarray(self.species))

    def atom_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def subset(self, indices) -> Dataset:
        return Dataset.from_frames([self[i] for i in indices], source=self.source)


def load_extxyz(path: str | Path) -> Dataset:
    frames = []
    for xyz in read_extxyz(path):
        if "energy" not in xyz.info:
            raise DatasetFormatError("missing energy key", line=xyz.info_line)
        try:
            energy = float(xyz.info["energy"])
        except ValueError:
            raise DatasetFormatError(
                f"energy is not a number: {xyz.info['energy']!r}", line=xyz.info_line
            )
        if xyz.forces is not None and not np.all(np.isfinite(xyz.forces)):
            raise DatasetFormatError("forces must be finite", line=xyz.info_line)
        frames.append(Frame(xyz.positions, xyz.species, energy, xyz.forces, xyz.box))
    if not frames:
        raise DatasetFormatError(f"{path} holds no frames")
    logger.info("loaded %d frames from %s", len(frames), path)
    return Dataset.from_frames(frames, source=Source.EXTXYZ)


def load_binary_container(path: str | Path) -> Dataset:
    arrays = read_container(path)
    for name in ("pos", "z", "energy"):
        if name not in arrays:
            raise DatasetFormatError(f"container lacks the required array '{name}'")
    pos, z, energy = arrays["pos"], arrays["z"], arrays["energy"]
    forces = arrays.get("forces")
    if energy.ndim != 1:
        raise DatasetFormatError(f"shape error: energy must be 1-D, got {energy.shape}")
    n_frames = len(energy)

    if "frame_offsets" in arrays:
        offsets = np.asarray(arrays["frame_offsets"])
        if offsets.shape != (n_frames + 1,):
            raise DatasetFormatError(
                f"shape error: frame_offsets has {offsets.shape}, expected ({n_frames + 1},)"
            )
        return Dataset(pos, z, energy, offsets, forces, source=Source.CONTAINER)

    if pos.ndim != 3 or pos.shape[0] != n_frames or pos.shape[2] != 3:
        raise DatasetFormatError(
            f"shape error: pos {pos.shape} does not match {n_frames} energies"
        )
    n_atoms = pos.shape[1]
    if z.shape == (n_atoms,):
        z = np.broadcast_to(z, (n_frames, n_atoms))
    elif z.shape != (n_frames, n_atoms):
        raise DatasetFormatError(f"shape error: z {z.shape} does not match pos {pos.shape}")
    if forces is not None and forces.shape != pos.shape:
        raise DatasetFormatError(f"shape error: forces {forces.shape} vs pos {pos.shape}")
    # reshape keeps the memory maps lazy; broadcast z is small
    return Dataset(
        pos.reshape(-1, 3),
        np.ascontiguousarray(z).reshape(-1),
        energy,
        np.arange(n_frames + 1) * n_atoms,
        None if forces is None else forces.reshape(-1, 3),
        source=Source.CONTAINER,
    )


def write_binary_container(path: str | Path, dataset: Dataset) -> None:
    """Ragged layout: flat ``pos``/``z``/``forces`` with ``frame_offsets``."""
    arrays = {
        "pos": np.asarray(dataset.positions, dtype=np.float64),
        "z": np.asarray(dataset.species, dtype=np.int64),
        "energy": np.asarray(dataset.energy, dtype=np.float64),
        "frame_offsets": dataset.offsets,
    }
    if dataset.forces is not None:
        arrays["forces"] = np.asarray(dataset.forces, dtype=np.float64)
    write_container(path, arrays)


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"dataset file not found: {path}")
    with open(path, "rb") as stream:
        magic = stream.read(4)
    if magic == DATASET_MAGIC:
        return load_binary_container(path)
    return load_extxyz(path)


def load_systems(path: str | Path) -> list[System]:
    """Every frame of a structure file as a System; energies are not required."""
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"structure file not found: {path}")
    with open(path, "rb") as stream:
        magic = stream.read(4)
    if magic == DATASET_MAGIC:
        return [frame.system() for frame in load_binary_container(path)]
    systems = [frame_system(xyz) for xyz in read_extxyz(path)]
    if not systems:
        raise DatasetFormatError(f"{path} holds no frames")
    return systems


class SplitIndices(NamedTuple):
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def _count(size, n_frames: int, name: str) -> int:
    if isinstance(size, float):
        if not 0.0 <= size <= 1.0:
            raise ConfigError(f"{name} as a fraction must lie in [0, 1], got {size}")
        return int(round(size * n_frames))
    if size < 0:
        raise ConfigError(f"{name} must be non-negative")
    return int(size)


def split(dataset, train_size, val_size, seed: int) -> SplitIndices:
    """Disjoint train/val/test indices; the remainder goes to test.

    Sizes are counts (int) or fractions of the dataset (float).
    """
    n_frames = dataset if isinstance(dataset, int) else len(dataset)
    n_train = _count(train_size, n_frames, "train_size")
    n_val = _count(val_size, n_frames, "val_size")
    if n_train + n_val > n_frames:
        raise ConfigError(
            f"infeasible split: {n_train} train + {n_val} val frames from {n_frames}"
        )
    order = np.random.default_rng(seed).permutation(n_frames)
    return SplitIndices(
        train=order[:n_train],
        val=order[n_train : n_train + n_val],
        test=order[n_train + n_val :],
    )


def batch_frames(frames: Sequence[Frame]) -> tuple[System, np.ndarray, np.ndarray | None]:
    """One batched System with per-sample energies and stacked forces."""
    system = System.concatenate([frame.system() for frame in frames])
    energy = np.array([frame.energy for frame in frames])
    forces = None
    if all(frame.forces is not None for frame in frames):
        forces = np.concatenate([frame.forces for frame in frames])
    return system, energy, forces
