from bench.harness import bench_model, format_model_table, write_model_table
from common.commands import ToolkitCommand
from common.models import RunRecord


class Command(ToolkitCommand):
    help = "Million steps per day of energy and force evaluation on shipped structures"
    kind = RunRecord.Kind.BENCH_MODEL

    def add_run_arguments(self, parser):
        parser.add_argument(
            "structures",
            nargs="*",
            help="structure names or .xyz paths (default: the structures key)",
        )

    def run(self, config, **options):
        rows = bench_model(
            config,
            structures=options.get("structures") or None,
            threads=options.get("threads"),
        )
        self.stdout.write(format_model_table(rows))
        output = options.get("output")
        if output:
            with open(output, "w", encoding="utf-8") as stream:
                write_model_table(rows, stream)
            self.stdout.write(self.style.SUCCESS(f"table written to {output}"))
        return {"rows": rows}
