from pathlib import Path

from ...evaluation import evaluate, human_consistency_table, prediction_extremes
from ...exceptions import CheckpointMismatchError
from ...models import EvaluationRun
from ...network import load_checkpoint
from ...reporting import (
    format_attribute_comparison,
    format_human_consistency,
    load_reference_results,
    write_report,
)
from ...training import STAGE_COLUMNS, resolve_device
from ..base import AestheticsCommand


class Command(AestheticsCommand):
    help = "Evaluate one or more checkpoints on the configured test split."

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--checkpoint",
            nargs="+",
            required=True,
            help="Checkpoint file(s), earliest stage first; each becomes a report column",
        )
        parser.add_argument("--output", help="Report directory (default: <OUTPUT_DIR>/evaluation)")
        parser.add_argument("--batch-size", type=int, default=64)
        parser.add_argument("--extremes", type=int, default=5, help="Best/worst predictions to list")

    def run(self, **options):
        config = self.load_config(options)
        schema = config.schema
        records = self.test_records(config)
        device = resolve_device(config.device)
        output = Path(options["output"]) if options["output"] else config.output_dir / "evaluation"

        report = None
        for path in options["checkpoint"]:
            checkpoint = load_checkpoint(path)
            if checkpoint.benchmark != schema.benchmark.value:
                raise CheckpointMismatchError(
                    f"{path} was trained on '{checkpoint.benchmark}', the config tests "
                    f"'{schema.benchmark.value}'; use cross_eval for cross-dataset scores"
                )
            expected = schema.target_names[: checkpoint.network.output_units]
            if checkpoint.target_names != expected:
                raise CheckpointMismatchError(
                    f"{path} predicts {', '.join(checkpoint.target_names)}; "
                    f"schema expects {', '.join(expected)}"
                )
            report = evaluate(
                checkpoint.network,
                records,
                schema,
                stage=STAGE_COLUMNS.get(checkpoint.stage, checkpoint.stage),
                previous=report,
                device=device,
                batch_size=options["batch_size"],
                num_workers=config.num_workers,
            )

        write_report(report, output)
        run = EvaluationRun.from_report(
            report,
            checkpoint=options["checkpoint"][-1],
            trained_on=schema.benchmark.value,
            report_path=output,
        )

        reference = load_reference_results().get(schema.benchmark.value, {})
        self.stdout.write(format_attribute_comparison(report, reference.get("attributes")))
        for column, errors in report.errors.items():
            for message in errors.values():
                self.stdout.write(self.style.WARNING(f"[{column}] {message}"))
        if reference.get("human_consistency") and run.overall_rho is not None:
            rows = [(r["band"], r["raters"], r["rho"]) for r in reference["human_consistency"]]
            self.stdout.write(format_human_consistency(human_consistency_table(run.overall_rho, rows)))

        best, worst = prediction_extremes(report, options["extremes"])
        self.stdout.write("Most accurate: " + ", ".join(f"{name} ({gt:.3f}/{pred:.3f})" for name, gt, pred in best))
        self.stdout.write("Least accurate: " + ", ".join(f"{name} ({gt:.3f}/{pred:.3f})" for name, gt, pred in worst))
        self.stdout.write(self.style.SUCCESS(f"Overall rho {run.overall_rho_display}; report in {output}"))
