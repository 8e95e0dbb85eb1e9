from bench.harness import BenchConfig, bench_neighbors, write_neighbor_csv
from common.commands import ToolkitCommand
from common.models import RunRecord


class Command(ToolkitCommand):
    help = "Time cell-list and brute-force neighbor search on random particle clouds"
    kind = RunRecord.Kind.BENCH_NEIGHBORS

    def run(self, config, **options):
        bench = BenchConfig.from_run_config(config)
        rows = bench_neighbors(bench, threads=options.get("threads"))
        output = options.get("output")
        if output:
            with open(output, "w", encoding="utf-8") as stream:
                write_neighbor_csv(rows, stream)
            self.stdout.write(self.style.SUCCESS(f"{len(rows)} rows written to {output}"))
        else:
            write_neighbor_csv(rows, self.stdout)
        return {"rows": len(rows)}
