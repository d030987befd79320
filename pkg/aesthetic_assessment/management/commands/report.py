import json
from pathlib import Path

from ...evaluation import human_consistency_table
from ...exceptions import ConfigurationError
from ...models import EvaluationRun
from ...reporting import (
    cross_dataset_table,
    format_cross_dataset,
    format_human_consistency,
    format_rho,
    format_task_comparison,
    load_reference_results,
    task_setting_comparison,
)
from ...serializers import EvaluationRunSerializer
from ..base import AestheticsCommand


def _read_report(directory):
    path = Path(directory) / "report.json"
    if not path.is_file():
        raise ConfigurationError(f"No report.json in {directory}")
    return json.loads(path.read_text(encoding="utf-8"))


def _overall_columns(report):
    return {column: values.get("overall") for column, values in report["columns"].items()}


class Command(AestheticsCommand):
    help = "Print stored results next to the bundled reference numbers."

    requires_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("--report", help="Evaluation report directory (multi-task network)")
        parser.add_argument("--single-task-report", help="Report directory of the single-task network")
        parser.add_argument("--runs", type=int, default=0, help="List the N most recent stored runs as JSON")

    def _attribute_table(self, report, reference):
        columns = list(report["columns"])
        self.stdout.write(f"{'Target':<24}" + "".join(f"{c:>14}{'ref':>8}" for c in columns))
        for target in report["target_names"]:
            cells = []
            for column in columns:
                value = report["columns"][column].get(target)
                ref = reference.get("attributes", {}).get(column, {}).get(target)
                cells.append(f"{format_rho(value, 3):>14}{format_rho(ref, 3):>8}")
            self.stdout.write(f"{target:<24}" + "".join(cells))

    def run(self, **options):
        references = load_reference_results()

        if options["report"]:
            report = _read_report(options["report"])
            reference = references.get(report["benchmark"], {})
            self._attribute_table(report, reference)
            overall = report["columns"][list(report["columns"])[-1]].get("overall")
            if overall is not None and reference.get("human_consistency"):
                rows = [(r["band"], r["raters"], r["rho"]) for r in reference["human_consistency"]]
                self.stdout.write(format_human_consistency(human_consistency_table(overall, rows)))
            if options["single_task_report"]:
                single = _read_report(options["single_task_report"])
                rows = task_setting_comparison(_overall_columns(report), _overall_columns(single))
                self.stdout.write(format_task_comparison(rows))

        stored = [
            (run.benchmark, run.test_benchmark, run.overall_rho)
            for run in EvaluationRun.objects.filter(overall_rho__isnull=False).order_by("created_at")
        ]
        if stored:
            latest = {(train, test): rho for train, test, rho in stored}
            self.stdout.write("Cross-dataset (stored runs):")
            self.stdout.write(format_cross_dataset(cross_dataset_table((*key, rho) for key, rho in latest.items())))
        reference_cross = [
            (train, test, rho)
            for train, row in references["cross_dataset"].items()
            for test, rho in row.items()
        ]
        self.stdout.write("Cross-dataset (reference):")
        self.stdout.write(format_cross_dataset(cross_dataset_table(reference_cross)))

        if options["runs"]:
            runs = EvaluationRun.objects.all()[: options["runs"]]
            self.stdout.write(json.dumps(EvaluationRunSerializer(runs, many=True).data, indent=2))
