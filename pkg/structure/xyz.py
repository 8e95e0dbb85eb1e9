"""Extended-XYZ reading and writing.

Each frame is an atom count line, a ``key=value`` comment line and one
``symbol x y z [fx fy fz]`` line per atom. Values may be double quoted,
which is how ``Lattice="ax ay az bx by bz cx cy cz"`` carries the box.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from common.exceptions import (
    DatasetFormatError,
    ElementError,
    MissingStructureError,
    SystemValidationError,
)
from structure.elements import atomic_number, element_symbol
from structure.system import Box, BoxKind, System, build_system

KEY_QUOTED_VALUE = re.compile(r'([A-Za-z_][A-Za-z0-9_-]*)\s*=\s*"([^"]*)"')
KEY_VALUE = re.compile(r'([A-Za-z_][A-Za-z0-9_-]*)\s*=\s*([^\s"]+)')


@dataclass
class XYZFrame:
    positions: np.ndarray
    species: np.ndarray
    info: dict[str, str] = field(default_factory=dict)
    forces: np.ndarray | None = None
    box: Box | None = None
    # line number of the comment line, for error messages downstream
    info_line: int = 2

    @property
    def n_atoms(self) -> int:
        return len(self.species)


def parse_info(line: str) -> dict[str, str]:
    info = {}
    for key, value in KEY_QUOTED_VALUE.findall(line):
        info[key] = value
    for key, value in KEY_VALUE.findall(KEY_QUOTED_VALUE.sub(" ", line)):
        info[key] = value
    return info


def box_from_lattice(text: str, line: int) -> Box:
    try:
        values = np.array([float(v) for v in text.split()])
    except ValueError:
        raise DatasetFormatError("Lattice must hold nine numbers", line=line)
    if values.size != 9:
        raise DatasetFormatError("Lattice must hold nine numbers", line=line)
    vectors = values.reshape(3, 3)
    kind = (
        BoxKind.ORTHORHOMBIC
        if np.all(vectors[~np.eye(3, dtype=bool)] == 0)
        else BoxKind.TRICLINIC
    )
    try:
        return Box(kind, vectors)
    except SystemValidationError as error:
        raise DatasetFormatError(str(error), line=line)


def _parse_species(token: str, line: int) -> int:
    if token.isdigit():
        return int(token)
    try:
        return atomic_number(token)
    except ElementError:
        raise DatasetFormatError(f"bad element symbol {token!r}", line=line)


def iter_extxyz(stream: IO[str]) -> Iterator[XYZFrame]:
    lines = iter(enumerate(stream, start=1))
    for number, raw in lines:
        if not raw.strip():
            continue
        try:
            n_atoms = int(raw.strip())
        except ValueError:
            raise DatasetFormatError(f"malformed atom count {raw.strip()!r}", line=number)
        if n_atoms < 1:
            raise DatasetFormatError("malformed atom count: must be positive", line=number)

        info_number, info_line = next(lines, (number + 1, None))
        if info_line is None:
            raise DatasetFormatError("missing comment line", line=info_number)
        info = parse_info(info_line)
        box = None
        if "Lattice" in info:
            box = box_from_lattice(info["Lattice"], info_number)

        positions = np.zeros((n_atoms, 3))
        species = np.zeros(n_atoms, dtype=np.int64)
        forces = None
        for atom in range(n_atoms):
            atom_number, atom_line = next(lines, (info_number + atom + 1, None))
            if atom_line is None:
                raise DatasetFormatError(
                    f"expected {n_atoms} atom lines, file ended", line=atom_number
                )
            fields = atom_line.split()
            if len(fields) not in (4, 7):
                raise DatasetFormatError(
                    "atom line must be 'symbol x y z' or 'symbol x y z fx fy fz'",
                    line=atom_number,
                )
            species[atom] = _parse_species(fields[0], atom_number)
            try:
                values = [float(v) for v in fields[1:]]
            except ValueError:
                raise DatasetFormatError("non-numeric coordinate", line=atom_number)
            positions[atom] = values[:3]
            if len(values) == 6:
                if forces is None:
                    if atom:
                        raise DatasetFormatError(
                            "force columns must be present on every atom line",
                            line=atom_number,
                        )
                    forces = np.zeros((n_atoms, 3))
                forces[atom] = values[3:]
            elif forces is not None:
                raise DatasetFormatError(
                    "force columns must be present on every atom line", line=atom_number
                )
        yield XYZFrame(positions, species, info, forces, box, info_line=info_number)


def frame_system(frame: XYZFrame) -> System:
    """Single-sample System of a frame; a ``charges="q1 q2 ..."`` key sets charges."""
    charges = None
    if "charges" in frame.info:
        try:
            charges = [float(v) for v in frame.info["charges"].split()]
        except ValueError:
            raise DatasetFormatError("charges must be numbers", line=frame.info_line)
        if len(charges) != frame.n_atoms:
            raise DatasetFormatError(
                f"{len(charges)} charges for {frame.n_atoms} atoms", line=frame.info_line
            )
    return build_system(frame.positions, frame.species, box=frame.box, charges=charges)


def read_extxyz(path: str | Path) -> list[XYZFrame]:
    with open(path, encoding="utf-8") as stream:
        return list(iter_extxyz(stream))


def _format_info(info: dict) -> str:
    parts = []
    for key, value in info.items():
        text = str(value)
        parts.append(f'{key}="{text}"' if " " in text else f"{key}={text}")
    return " ".join(parts)


def write_extxyz(
    stream: IO[str],
    system: System,
    info: dict | None = None,
    forces: np.ndarray | None = None,
) -> None:
    """Append one frame per sample of ``system``.

    ``info`` values that are sequences are taken per sample.
    """
    info = info or {}
    for index in range(system.n_samples):
        mask = system.batch == index
        frame_info = {
            key: (value[index] if isinstance(value, (list, tuple, np.ndarray)) else value)
            for key, value in info.items()
        }
        if system.is_periodic:
            lattice = " ".join(f"{v:.10g}" for v in system.box.vectors.reshape(-1))
            frame_info = {"Lattice": lattice, **frame_info}
        stream.write(f"{int(mask.sum())}\n{_format_info(frame_info)}\n")
        positions = system.positions[mask]
        frame_forces = None if forces is None else forces[mask]
        for atom, z in enumerate(system.species[mask]):
            row = " ".join(f"{v:.10f}" for v in positions[atom])
            if frame_forces is not None:
                row += " " + " ".join(f"{v:.10f}" for v in frame_forces[atom])
            stream.write(f"{element_symbol(int(z))} {row}\n")


def read_structure(path: str | Path) -> System:
    """First frame of an extended-XYZ file as a System."""
    path = Path(path)
    if not path.is_file():
        raise MissingStructureError(f"structure file not found: {path}")
    with open(path, encoding="utf-8") as stream:
        frame = next(iter_extxyz(stream), None)
    if frame is None:
        raise DatasetFormatError(f"{path} holds no frames")
    return frame_system(frame)
