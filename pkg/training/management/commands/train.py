from common.commands import ToolkitCommand
from common.models import RunRecord
from training.checkpoint import save_checkpoint
from training.datasets import load_dataset
from training.trainer import train


class Command(ToolkitCommand):
    help = "Train a graph network potential on an energy (and force) dataset"
    kind = RunRecord.Kind.TRAIN

    def add_run_arguments(self, parser):
        parser.add_argument("dataset", help="extended-XYZ file or binary dataset container")

    def _progress(self, record):
        line = f"epoch {record['epoch']}: lr {record['lr']:.3g}, train {record['train_loss']:.6g}"
        if "val_y_mse" in record:
            line += f", val {record['val_y_mse']:.6g}"
        self.stdout.write(line)
        if self.record is not None:
            self.record.set_log(line)

    def run(self, config, **options):
        dataset = load_dataset(options["dataset"])
        checkpoint = train(
            config, dataset, threads=options.get("threads"), progress=self._progress
        )
        output = options.get("output") or "model.ckpt"
        save_checkpoint(checkpoint, output)
        metrics = checkpoint.metrics
        self.stdout.write(
            self.style.SUCCESS(
                f"best epoch {metrics['best_epoch']}, checkpoint written to {output}"
            )
        )
        return {
            "frames": len(dataset),
            "n_parameters": metrics["n_parameters"],
            "best_epoch": metrics["best_epoch"],
            "best_val": checkpoint.state.best_val,
            "test": metrics.get("test", {}),
        }
