from pathlib import Path
import json
import math
import tempfile

from django.test import SimpleTestCase

from ..evaluation import EvalReport, evaluate, human_consistency_table
from ..reporting import (
    cross_dataset_table,
    format_attribute_comparison,
    format_cross_dataset,
    format_human_consistency,
    format_rho,
    format_task_comparison,
    load_reference_results,
    task_setting_comparison,
    write_report,
)
from ..schema import AADB_SCHEMA
from .fixtures import synthetic_records, tiny_network, write_tiny_weights


class WriteReportTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        directory = Path(cls.tmp.name)
        net = tiny_network(output_units=12, weights_path=write_tiny_weights(directory / "tiny.pt"))
        records = synthetic_records(directory, AADB_SCHEMA, 8, seed=9)
        cls.report = evaluate(net, records, AADB_SCHEMA)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_files_written(self):
        directory = write_report(self.report, Path(self.tmp.name) / "report")
        names = {path.name for path in directory.iterdir()}
        self.assertTrue(
            {
                "report.json",
                "scatter.csv",
                "scatter.png",
                "frequencies.csv",
                "correlations_ground_truth.csv",
                "correlations_ground_truth.png",
                "correlations_predictions.csv",
                "correlations_predictions.png",
            }
            <= names
        )
        payload = json.loads((directory / "report.json").read_text())
        self.assertEqual(payload["benchmark"], "aadb")
        self.assertEqual(payload["test_size"], 8)
        self.assertEqual(len(payload["target_names"]), 12)

    def test_rewrite_is_byte_identical(self):
        first = write_report(self.report, Path(self.tmp.name) / "first")
        second = write_report(self.report, Path(self.tmp.name) / "second")
        for path in sorted(first.iterdir()):
            self.assertEqual(path.read_bytes(), (second / path.name).read_bytes(), path.name)


class ComparisonTests(SimpleTestCase):
    def test_task_setting_rows(self):
        rows = task_setting_comparison(
            {"training": 0.600, "fine_tuning": 0.695}, {"training": 0.604, "fine_tuning": 0.675}
        )
        self.assertEqual([row["column"] for row in rows], ["training", "fine_tuning"])
        self.assertFalse(rows[0]["multi_task_better"])
        self.assertTrue(rows[1]["multi_task_better"])
        self.assertAlmostEqual(rows[1]["difference"], 0.02)
        self.assertIn("fine_tuning", format_task_comparison(rows))

    def test_task_setting_skips_missing_columns(self):
        multi = EvalReport(benchmark="aadb", target_names=("overall",), columns={"fine_tuning": {"overall": 0.7067}})
        rows = task_setting_comparison(multi, {"fine_tuning": 0.6890})
        self.assertEqual(len(rows), 1)
        self.assertTrue(rows[0]["multi_task_better"])

    def test_cross_dataset_table_layout(self):
        table = cross_dataset_table(
            [("aadb", "aadb", 0.707), ("aadb", "eva", 0.321), ("eva", "aadb", 0.441), ("eva", "eva", 0.695)]
        )
        self.assertEqual(list(table.index), ["aadb", "eva"])
        self.assertEqual(list(table.columns), ["aadb", "eva"])
        self.assertEqual(table.loc["eva", "aadb"], 0.441)
        text = format_cross_dataset(table)
        self.assertIn("0.321", text)
        self.assertIn("EVA", text)

    def test_cross_dataset_partial_and_duplicates(self):
        table = cross_dataset_table([("aadb", "aadb", 0.7), ("aadb", "eva", 0.3)])
        self.assertTrue(math.isnan(table.loc["eva", "aadb"]))
        self.assertIn("-", format_cross_dataset(table))
        with self.assertRaises(ValueError):
            cross_dataset_table([("aadb", "eva", 0.3), ("aadb", "eva", 0.4)])

    def test_reference_results(self):
        reference = load_reference_results()
        self.assertEqual(reference["cross_dataset"]["eva"]["aadb"], 0.441)
        self.assertEqual(sum(reference["eva"]["frequency_counts"]), 570)
        self.assertEqual(reference["parameters"]["backbone"], 14_714_688)
        rows = [(r["band"], r["raters"], r["rho"]) for r in reference["aadb"]["human_consistency"]]
        text = format_human_consistency(human_consistency_table(reference["aadb"]["overall_rho"], rows))
        self.assertEqual(text.count("above"), 2)
        self.assertEqual(text.count("below"), 1)

    def test_attribute_comparison_text(self):
        report = EvalReport(
            benchmark="eva",
            target_names=("overall", "quality"),
            columns={"fine_tuning": {"overall": 0.69512, "quality": None}},
        )
        text = format_attribute_comparison(report, {"fine_tuning": {"overall": 0.695}})
        self.assertIn("0.695", text)
        self.assertEqual(format_rho(None), "-")
        self.assertEqual(format_rho(0.70666), "0.7067")
