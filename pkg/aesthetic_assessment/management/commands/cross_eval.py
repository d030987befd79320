from pathlib import Path

from ...evaluation import cross_evaluate
from ...models import EvaluationRun
from ...network import load_checkpoint
from ...reporting import cross_dataset_table, format_cross_dataset
from ...training import resolve_device
from ..base import AestheticsCommand


class Command(AestheticsCommand):
    help = "Score checkpoints on the overall score of other benchmarks' test splits."

    def add_command_arguments(self, parser):
        parser.add_argument("--checkpoint", nargs="+", required=True, help="Checkpoint file(s)")
        parser.add_argument(
            "--test-config",
            nargs="*",
            default=[],
            help="Further pipeline configs whose test splits are scored",
        )
        parser.add_argument("--output", help="CSV file for the train x test table")
        parser.add_argument("--batch-size", type=int, default=64)

    def run(self, **options):
        configs = [self.load_config(options)]
        configs += [self.load_config(options, path=path) for path in options["test_config"]]
        device = resolve_device(configs[0].device)
        test_sets = [(config.benchmark.value, self.test_records(config)) for config in configs]

        entries = []
        for path in options["checkpoint"]:
            checkpoint = load_checkpoint(path)
            for benchmark, records in test_sets:
                rho = cross_evaluate(
                    checkpoint.network,
                    records,
                    device=device,
                    batch_size=options["batch_size"],
                    num_workers=configs[0].num_workers,
                )
                entries.append((checkpoint.benchmark, benchmark, rho))
                EvaluationRun.objects.create(
                    benchmark=checkpoint.benchmark,
                    test_benchmark=benchmark,
                    stage=checkpoint.stage,
                    checkpoint=str(path),
                    test_size=len(records),
                    overall_rho=rho,
                    target_correlations={"overall": rho},
                )

        table = cross_dataset_table(entries)
        output = Path(options["output"]) if options["output"] else configs[0].output_dir / "cross_dataset.csv"
        output.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(output, lineterminator="\n")
        self.stdout.write(format_cross_dataset(table))
        self.stdout.write(self.style.SUCCESS(f"Wrote {output}"))
