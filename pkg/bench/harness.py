"""Timing harnesses for neighbor search and model inference.

Both follow the same protocol: warmup executions, then the mean wall time
of ``repetitions`` identical executions on a monotonic clock. Throughput is
reported in million steps per day, where ``msteps/day = 86.4 / ms``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from bench.cloud import generate_cloud
from common.exceptions import ConfigError, MissingStructureError, NeighborOverflowError
from common.units import SECONDS_PER_DAY
from neighbors.engine import build_neighbor_list, build_with_retry, canonicalize
from neighbors.types import NeighborSpec, Strategy
from potential.config import GNConfig
from potential.network import GraphPotential
from structure.xyz import read_structure

logger = logging.getLogger(__name__)

NEIGHBOR_CSV_HEADER = (
    "particles",
    "batch",
    "cell_ms",
    "brute_ms",
    "pairs",
    "capacity",
    "capacity_retries",
)

# Pair budget per atom of the model benchmark.
MODEL_PAIRS_PER_ATOM = 32


def msteps_per_day(ms_per_step: float) -> float:
    return SECONDS_PER_DAY * 1e3 / 1e6 / ms_per_step


@dataclass(frozen=True)
class BenchConfig:
    particles: list[int] = field(default_factory=lambda: [1024, 4096])
    batches: list[int] = field(default_factory=lambda: [1])
    neighbors_per_particle: float = 64.0
    cutoff: float = 5.0
    repetitions: int = 50
    warmup_repetitions: int = 5
    seed: int = 0
    strategies: list[str] = field(default_factory=lambda: ["cell", "brute"])

    def __post_init__(self):
        if not self.particles or min(self.particles) < 1:
            raise ConfigError("particle counts must be at least 1")
        if not self.batches or min(self.batches) < 1:
            raise ConfigError("batch counts must be at least 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.warmup_repetitions < 0:
            raise ConfigError("warmup_repetitions must not be negative")
        for strategy in self.strategies:
            if strategy not in (Strategy.CELL, Strategy.BRUTE):
                raise ConfigError(f"cannot benchmark strategy {strategy!r}")

    @classmethod
    def from_run_config(cls, config) -> BenchConfig:
        return cls(
            particles=list(config.particles),
            batches=list(config.batches),
            neighbors_per_particle=config.neighbors_per_particle,
            cutoff=config.cutoff_upper,
            repetitions=config.repetitions,
            warmup_repetitions=config.warmup_repetitions,
            seed=config.seed,
            strategies=list(config.strategies),
        )


def time_call(function, repetitions: int, warmup: int = 0) -> tuple[float, list]:
    """Mean milliseconds of ``function()`` after ``warmup`` untimed calls."""
    for _ in range(warmup):
        function()
    results, elapsed = [], 0.0
    for _ in range(repetitions):
        started = time.perf_counter()
        results.append(function())
        elapsed += time.perf_counter() - started
    return elapsed / repetitions * 1e3, results


def _expected_capacity(n: int, k: float, batches: int) -> int:
    # half list: every pair once, neighbors only inside the own batch
    return max(1, math.ceil(1.1 * n * k / (2.0 * batches)))


def _sized_spec(system, spec: NeighborSpec, threads) -> tuple[NeighborSpec, int]:
    """Build once; on overflow retry a single time with doubled capacity."""
    try:
        build_neighbor_list(system, spec, threads=threads)
        return spec, 0
    except NeighborOverflowError as error:
        doubled = spec.with_capacity(2 * spec.capacity)
        logger.info(
            "neighbor capacity %d too small (%d pairs), retrying with %d",
            spec.capacity,
            error.required,
            doubled.capacity,
        )
        build_neighbor_list(system, doubled, threads=threads)
        return doubled, 1


def _pair_signature(neighbors) -> tuple[np.ndarray, np.ndarray]:
    pairs, distances = canonicalize(neighbors)
    order = np.lexsort((distances, pairs[:, 1], pairs[:, 0]))
    return pairs[order], distances[order]


def check_same_pairs(lists) -> None:
    """Every repetition must find the same pairs, whatever order a strategy emits them in."""
    reference_pairs, reference_distances = _pair_signature(lists[0])
    for repetition, neighbors in enumerate(lists[1:], start=1):
        pairs, distances = _pair_signature(neighbors)
        if not (
            pairs.shape == reference_pairs.shape
            and np.array_equal(pairs, reference_pairs)
            and np.allclose(distances, reference_distances, rtol=0.0, atol=1e-12)
        ):
            raise ConfigError(
                f"repetition {repetition} found a different pair set "
                f"({len(pairs)} pairs, first repetition {len(reference_pairs)})"
            )


def bench_neighbors(config: BenchConfig, threads: int | None = None) -> list[dict]:
    """One row per (particles, batch) with mean milliseconds per strategy."""
    rows = []
    for n in config.particles:
        for batches in config.batches:
            system = generate_cloud(
                n, config.neighbors_per_particle, config.cutoff, batches, config.seed
            )
            spec = NeighborSpec(
                cutoff_upper=config.cutoff,
                capacity=_expected_capacity(n, config.neighbors_per_particle, batches),
            )
            row = {
                "particles": n,
                "batch": batches,
                "cell_ms": None,
                "brute_ms": None,
                "pairs": None,
                "capacity": None,
                "capacity_retries": 0,
            }
            for strategy in config.strategies:
                strategy_spec = NeighborSpec(
                    cutoff_upper=spec.cutoff_upper,
                    capacity=spec.capacity,
                    strategy=strategy,
                    deterministic=False,
                )
                strategy_spec, retries = _sized_spec(system, strategy_spec, threads)
                ms, lists = time_call(
                    lambda: build_neighbor_list(system, strategy_spec, threads=threads),
                    config.repetitions,
                    config.warmup_repetitions,
                )
                check_same_pairs(lists)
                row[f"{strategy}_ms"] = ms
                row["pairs"] = lists[0].count
                row["capacity"] = max(row["capacity"] or 0, strategy_spec.capacity)
                row["capacity_retries"] = max(row["capacity_retries"], retries)
                logger.debug("n=%d batch=%d %s: %.3f ms", n, batches, strategy, ms)
            rows.append(row)
    return rows


def write_neighbor_csv(rows: list[dict], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(NEIGHBOR_CSV_HEADER)
    for row in rows:
        values = []
        for key in NEIGHBOR_CSV_HEADER:
            value = row[key]
            if value is None:
                value = ""
            elif key.endswith("_ms"):
                value = f"{value:.6f}"
            values.append(value)
        writer.writerow(values)


def structure_path(name: str, directory: Path | None = None) -> Path:
    directory = Path(settings.BENCH_STRUCTURES_DIR if directory is None else directory)
    path = Path(name)
    if path.suffix != ".xyz":
        path = directory / f"{name}.xyz"
    if not path.is_file():
        raise MissingStructureError(f"benchmark structure not found: {path}")
    return path


def bench_model(
    config,
    layers=None,
    structures=None,
    directory: Path | None = None,
    threads: int | None = None,
) -> list[dict]:
    """Million steps per day of energy and force evaluation, per structure and depth.

    Each row holds ``structure``, ``atoms`` and one ``{L}L`` column per layer count.
    """
    layers = list(config.bench_layers if layers is None else layers)
    structures = list(config.structures if structures is None else structures)
    # resolve every file before timing anything
    paths = [(name, structure_path(name, directory)) for name in structures]
    rows = []
    for name, path in paths:
        system = read_structure(path)
        spec = NeighborSpec(
            cutoff_upper=config.cutoff_upper,
            cutoff_lower=config.cutoff_lower,
            capacity=MODEL_PAIRS_PER_ATOM * system.n_atoms,
            full_list=True,
        )
        neighbors, spec = build_with_retry(system, spec, threads=threads)
        row = {"structure": Path(name).stem, "atoms": system.n_atoms}
        for num_layers in layers:
            gn_config = GNConfig.from_run_config(config, num_layers=num_layers)
            potential = GraphPotential(gn_config, seed=config.seed)
            ms, _ = time_call(
                lambda: potential.evaluate(system, neighbors, derivative=True),
                config.repetitions,
                config.warmup_repetitions,
            )
            row[f"{num_layers}L"] = msteps_per_day(ms)
            logger.info(
                "%s, %d layers: %.3f ms/step, %.4g Msteps/day",
                name,
                num_layers,
                ms,
                row[f"{num_layers}L"],
            )
        rows.append(row)
    return rows


def write_model_table(rows: list[dict], stream) -> None:
    if not rows:
        return
    header = list(rows[0])
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [f"{row[key]:.6g}" if isinstance(row[key], float) else row[key] for key in header]
        )


def format_model_table(rows: list[dict]) -> str:
    """Plain-text table, one row per structure and one column per layer count."""
    if not rows:
        return ""
    header = list(rows[0])
    cells = [header] + [
        [f"{row[key]:.4g}" if isinstance(row[key], float) else str(row[key]) for key in header]
        for row in rows
    ]
    widths = [max(len(line[column]) for line in cells) for column in range(len(header))]
    return "\n".join(
        "  ".join(cell.rjust(width) for cell, width in zip(line, widths)) for line in cells
    )


def scaling_exponent(particles, milliseconds) -> float:
    """Slope of log(time) against log(particles), the empirical scaling exponent."""
    slope, _ = np.polyfit(np.log(particles), np.log(milliseconds), 1)
    return float(slope)
