from itertools import groupby

import numpy as np

from common.commands import ToolkitCommand
from common.models import RunRecord
from neighbors.engine import build_with_retry
from structure.system import System
from structure.xyz import write_extxyz
from training.checkpoint import load_checkpoint
from training.datasets import load_systems


def batches_of(systems: list[System], batch_size: int):
    """Consecutive frames sharing a box, at most ``batch_size`` per batch."""
    for _, group in groupby(systems, key=lambda system: system.box):
        group = list(group)
        for start in range(0, len(group), batch_size):
            yield System.concatenate(group[start : start + batch_size])


class Command(ToolkitCommand):
    help = "Energies and forces of every frame of a structure file"
    kind = RunRecord.Kind.INFER

    def add_run_arguments(self, parser):
        parser.add_argument("checkpoint", help="checkpoint written by train")
        parser.add_argument("structures", help="extended-XYZ file or binary dataset container")

    def run(self, config, **options):
        potential = load_checkpoint(options["checkpoint"]).potential(config.derivative)
        systems = load_systems(options["structures"])
        output = options.get("output") or "predictions.xyz"

        energies = []
        with open(output, "w", encoding="utf-8") as stream:
            for system in batches_of(systems, config.batch_size):
                spec = potential.neighbor_spec(
                    system.n_atoms,
                    max_num_neighbors=config.max_num_neighbors,
                    strategy=config.strategy,
                    deterministic=config.deterministic,
                )
                neighbors, _ = build_with_retry(system, spec, threads=options.get("threads"))
                result = potential.evaluate(system, neighbors)
                energies.append(result.energy)
                write_extxyz(
                    stream,
                    system,
                    {"energy": [f"{e:.10g}" for e in result.energy]},
                    forces=result.forces,
                )
        energies = np.concatenate(energies)
        self.stdout.write(self.style.SUCCESS(f"{len(energies)} frames written to {output}"))
        return {"frames": len(energies), "mean_energy": float(energies.mean())}
