from common.commands import ToolkitCommand
from common.models import RunRecord
from dynamics.integrator import MDState
from dynamics.trajectory import rmsd, run_simulation, write_trajectory
from structure.xyz import read_structure
from training.checkpoint import potential_for_run


class Command(ToolkitCommand):
    help = "Run NVT Langevin dynamics from a structure file"
    kind = RunRecord.Kind.SIMULATE

    def add_run_arguments(self, parser):
        parser.add_argument("structure", help="extended-XYZ starting structure")
        parser.add_argument(
            "--checkpoint",
            help="trained model; without it the prior_model terms drive the dynamics",
        )

    def run(self, config, **options):
        system = read_structure(options["structure"])
        potential = potential_for_run(config, options.get("checkpoint"))
        spec = potential.neighbor_spec(
            system.n_atoms,
            max_num_neighbors=config.max_num_neighbors,
            strategy=config.strategy,
            deterministic=config.deterministic,
        )
        state = MDState.initialize(system, config.temperature, seed=config.seed, spec=spec)
        trajectory, report = run_simulation(
            state,
            potential,
            steps=config.steps,
            dt=config.timestep,
            temperature=config.temperature,
            gamma=config.friction,
            stride=config.stride,
            threads=options.get("threads"),
        )

        output = options.get("output") or "trajectory.xyz"
        sidecar = write_trajectory(trajectory, output)
        positions = trajectory.positions
        report["frames"] = len(trajectory)
        report["final_rmsd"] = rmsd(positions[0], positions[-1])
        self.stdout.write(
            self.style.SUCCESS(
                f"{len(trajectory)} frames written to {output} (metadata in {sidecar})"
            )
        )
        if "msteps_per_day" in report:
            self.stdout.write(
                f"{report['msteps_per_day']:.4g} Msteps/day, {report['ns_per_day']:.4g} ns/day"
            )
        return report
