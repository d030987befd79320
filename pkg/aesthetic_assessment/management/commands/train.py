from ...exceptions import BackboneLoadError
from ...models import EvaluationRun
from ...reporting import format_attribute_comparison
from ...training import run_pipeline
from ..base import AestheticsCommand


class Command(AestheticsCommand):
    help = "Run two-stage training, checkpointing and evaluating after each stage."

    def add_command_arguments(self, parser):
        parser.add_argument("--output", help="Override OUTPUT_DIR")

    def run(self, **options):
        config = self.load_config(options)
        if options["output"]:
            config = config.with_output_dir(options["output"])
        if config.backbone_weights is None:
            raise BackboneLoadError(
                "No backbone weights configured; set BACKBONE_WEIGHTS or BACKBONE_WEIGHTS_PATH"
            )

        result = run_pipeline(config)

        for stage, path in result.checkpoints.items():
            self.stdout.write(f"{stage} checkpoint: {path}")
        if result.report is None:
            self.stdout.write(self.style.WARNING("No test split; nothing was evaluated"))
            return
        final_checkpoint = list(result.checkpoints.values())[-1]
        run = EvaluationRun.from_report(
            result.report,
            checkpoint=final_checkpoint,
            trained_on=config.benchmark.value,
            report_path=config.output_dir / "report",
        )
        self.stdout.write(format_attribute_comparison(result.report))
        self.stdout.write(self.style.SUCCESS(f"Overall rho {run.overall_rho_display} ({run.id})"))
