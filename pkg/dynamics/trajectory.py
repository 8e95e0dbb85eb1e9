from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from common.exceptions import ConfigError, SystemValidationError
from common.units import SECONDS_PER_DAY
from dynamics.integrator import MDState, compute_forces, langevin_middle_step
from structure.system import System
from structure.xyz import write_extxyz

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Frame:
    step: int
    time: float
    positions: np.ndarray
    potential_energy: float
    kinetic_energy: float

    @property
    def total_energy(self) -> float:
        return self.potential_energy + self.kinetic_energy


@dataclass(eq=False)
class Trajectory:
    """Frames captured every ``stride`` steps, starting with the initial state."""

    system: System
    stride: int
    metadata: dict = field(default_factory=dict)
    frames: list[Frame] = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    def capture(self, state: MDState) -> None:
        self.frames.append(
            Frame(
                step=state.step,
                time=state.time,
                positions=np.array(state.system.positions),
                potential_energy=float(np.sum(state.energy_forces.energy)),
                kinetic_energy=state.kinetic_energy,
            )
        )

    @property
    def positions(self) -> np.ndarray:
        return np.stack([frame.positions for frame in self.frames])

    def total_energies(self) -> np.ndarray:
        return np.array([frame.total_energy for frame in self.frames])


def throughput(steps: int, wall_seconds: float, dt: float) -> dict[str, float]:
    """Million steps per day and nanoseconds per day at a ``dt`` fs timestep."""
    if wall_seconds <= 0:
        raise ConfigError("wall time must be positive to report throughput")
    msteps_per_day = steps / wall_seconds * SECONDS_PER_DAY / 1e6
    return {"msteps_per_day": msteps_per_day, "ns_per_day": msteps_per_day * dt}


def rmsd(reference: np.ndarray, frame: np.ndarray, align: bool = True) -> float:
    """Root mean square deviation in Å, after optimal rigid superposition if ``align``."""
    reference = np.asarray(reference, dtype=np.float64)
    frame = np.asarray(frame, dtype=np.float64)
    if reference.shape != frame.shape or reference.ndim != 2 or reference.shape[1] != 3:
        raise SystemValidationError(
            f"rmsd needs matching N×3 frames, got {reference.shape} and {frame.shape}"
        )
    if align:
        reference = reference - reference.mean(axis=0)
        frame = frame - frame.mean(axis=0)
        u, _, vt = np.linalg.svd(frame.T @ reference)
        # flip the weakest axis instead of reflecting
        sign = np.sign(np.linalg.det(u @ vt)) or 1.0
        correction = np.diag([1.0, 1.0, sign])
        frame = frame @ (u @ correction @ vt)
    return float(np.sqrt(np.mean(np.sum((frame - reference) ** 2, axis=1))))


def run_simulation(
    state: MDState,
    potential,
    steps: int,
    dt: float,
    temperature: float,
    gamma: float,
    stride: int,
    threads: int | None = None,
) -> tuple[Trajectory, dict]:
    """Integrate ``steps`` Langevin steps; returns the trajectory and a throughput report."""
    if steps < 0 or stride < 1:
        raise ConfigError("steps must be >= 0 and stride >= 1")
    if dt <= 0:
        raise ConfigError("timestep must be positive")
    if state.energy_forces is None:
        state = compute_forces(state, potential, threads)

    trajectory = Trajectory(
        system=state.system,
        stride=stride,
        metadata={
            "timestep_fs": dt,
            "temperature_k": temperature,
            "friction_per_ps": gamma,
            "seed": state.seed,
            "stride": stride,
            "steps": steps,
            "n_atoms": state.system.n_atoms,
        },
    )
    trajectory.capture(state)

    started = time.perf_counter()
    for _ in range(steps):
        state = langevin_middle_step(state, potential, dt, temperature, gamma, threads)
        if state.step % stride == 0:
            trajectory.capture(state)
    wall = time.perf_counter() - started

    report = {"steps": steps, "wall_seconds": wall}
    if steps and wall > 0:
        report.update(throughput(steps, wall, dt))
        logger.info(
            "%d steps in %.3f s: %.4g Msteps/day, %.4g ns/day",
            steps,
            wall,
            report["msteps_per_day"],
            report["ns_per_day"],
        )
    report["final_temperature_k"] = state.temperature
    return trajectory, report


def write_trajectory(trajectory: Trajectory, path: str | Path) -> Path:
    """Multi-frame extended XYZ plus a ``key: value`` sidecar at ``<path>.meta``."""
    path = Path(path)
    system = trajectory.system
    with open(path, "w", encoding="utf-8") as stream:
        for frame in trajectory.frames:
            write_extxyz(
                stream,
                system.with_positions(frame.positions),
                {
                    "step": frame.step,
                    "time": f"{frame.time:.6g}",
                    "energy": f"{frame.potential_energy:.10g}",
                    "kinetic_energy": f"{frame.kinetic_energy:.10g}",
                },
            )
    sidecar = path.with_name(path.name + ".meta")
    with open(sidecar, "w", encoding="utf-8") as stream:
        for key, value in trajectory.metadata.items():
            stream.write(f"{key}: {value}\n")
        stream.write(f"frames: {len(trajectory)}\n")
    logger.info("wrote %d frames to %s", len(trajectory), path)
    return sidecar
