from itertools import product
from pathlib import Path
import math
import tempfile

import numpy as np
import torch
from django.test import SimpleTestCase

from ..evaluation import (
    attribute_correlation_matrix,
    cross_evaluate,
    evaluate,
    human_consistency_table,
    interval_frequencies,
    permutation_significance,
    prediction_coverage,
    prediction_extremes,
    rho_significance,
    spearman_rho,
)
from ..exceptions import CheckpointMismatchError, EmptySplitError, UndefinedCorrelationError
from ..schema import EVA_SCHEMA
from .fixtures import synthetic_records, tiny_network, write_tiny_weights


def oracle_ranks(values):
    return [
        sum(1 for w in values if w < v) + (sum(1 for w in values if w == v) + 1) / 2
        for v in values
    ]


def oracle_rho(a, b):
    """Explicit tie-averaged ranks followed by a textbook Pearson correlation; None if undefined."""
    ra, rb = oracle_ranks(a), oracle_ranks(b)
    mean_a, mean_b = sum(ra) / len(ra), sum(rb) / len(rb)
    cov = sum((x - mean_a) * (y - mean_b) for x, y in zip(ra, rb))
    var_a = sum((x - mean_a) ** 2 for x in ra)
    var_b = sum((y - mean_b) ** 2 for y in rb)
    if var_a == 0 or var_b == 0:
        return None
    return cov / math.sqrt(var_a * var_b)


class SpearmanTests(SimpleTestCase):
    def test_identical_and_reversed(self):
        a = [0.3, 0.1, 0.9, 0.5]
        self.assertEqual(spearman_rho(a, a), 1.0)
        self.assertEqual(spearman_rho(a, [-x for x in a]), -1.0)

    def test_ties_example(self):
        self.assertAlmostEqual(spearman_rho([1, 2, 2, 4], [1, 3, 2, 4]), oracle_rho([1, 2, 2, 4], [1, 3, 2, 4]), delta=1e-12)

    def test_exhaustive_small_alphabets(self):
        for n in range(2, 7):
            for alphabet in (1, 2, 3):
                sequences = list(product(range(alphabet), repeat=n))
                for a in sequences:
                    for b in sequences:
                        expected = oracle_rho(a, b)
                        if expected is None:
                            with self.assertRaises(UndefinedCorrelationError):
                                spearman_rho(a, b)
                        else:
                            self.assertLessEqual(abs(spearman_rho(a, b) - expected), 1e-12)

    def test_random_real_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            n = int(rng.integers(2, 21))
            a = rng.normal(size=n)
            b = a * rng.normal() + rng.normal(size=n)
            self.assertLessEqual(abs(spearman_rho(a, b) - oracle_rho(list(a), list(b))), 1e-12)

    def test_symmetric_and_monotone_invariant(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=30), rng.normal(size=30)
        self.assertEqual(spearman_rho(a, b), spearman_rho(b, a))
        self.assertAlmostEqual(spearman_rho(np.exp(a), b ** 3), spearman_rho(a, b), delta=1e-12)

    def test_undefined_inputs(self):
        with self.assertRaises(UndefinedCorrelationError):
            spearman_rho([1.0], [2.0])
        with self.assertRaises(UndefinedCorrelationError):
            spearman_rho([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with self.assertRaises(ValueError):
            spearman_rho([1.0, float("inf")], [1.0, 2.0])


class SignificanceTests(SimpleTestCase):
    def test_reported_correlation_is_significant(self):
        self.assertLess(rho_significance(0.7067, 1000), 0.01)

    def test_zero_and_perfect(self):
        self.assertEqual(rho_significance(0.0, 50), 1.0)
        self.assertEqual(rho_significance(1.0, 10), 0.0)
        self.assertEqual(rho_significance(-1.0, 10), 0.0)

    def test_small_n_rejected(self):
        with self.assertRaises(ValueError):
            rho_significance(0.5, 3)

    def test_t_approximation_close_to_permutation(self):
        a = np.arange(10)
        b = np.array([5, 1, 6, 3, 4, 0, 2, 7, 8, 9])
        rho = spearman_rho(a, b)
        self.assertAlmostEqual(rho, 1 - 6 * 82 / 990, delta=1e-12)
        exact = permutation_significance(a, b, resamples=20_000, seed=0)
        self.assertAlmostEqual(rho_significance(rho, 10), exact, delta=0.02)


class FrequencyTests(SimpleTestCase):
    def test_half_open_bins_last_closed(self):
        table = interval_frequencies([0.0, 0.1, 0.15, 0.2, 0.3], [0.0, 0.1, 0.2, 0.3])
        self.assertEqual(table.counts, (1, 2, 2))
        self.assertAlmostEqual(sum(table.percentages), 1.0, delta=1e-9)

    def test_all_mass_in_first_bin(self):
        table = interval_frequencies([1.7] * 5, [1.7, 2.0, 3.0])
        self.assertEqual(table.counts, (5, 0))

    def test_crossing_an_edge_moves_one_count(self):
        before = interval_frequencies([0.15, 0.25], [0.1, 0.2, 0.3])
        after = interval_frequencies([0.2, 0.25], [0.1, 0.2, 0.3])
        self.assertEqual(before.counts, (1, 1))
        self.assertEqual(after.counts, (0, 2))

    def test_invalid_inputs(self):
        with self.assertRaises(ValueError):
            interval_frequencies([0.5], [0.0, 1.0, 0.5])
        with self.assertRaises(ValueError):
            interval_frequencies([1.5], [0.0, 1.0])


class CorrelationMatrixTests(SimpleTestCase):
    def test_unit_diagonal_and_symmetry(self):
        table = np.random.default_rng(0).normal(size=(20, 4))
        matrix = attribute_correlation_matrix(table, ["overall", "a", "b", "c"])
        np.testing.assert_array_equal(np.diag(matrix.matrix), np.ones(4))
        np.testing.assert_array_equal(matrix.matrix, matrix.matrix.T)
        self.assertEqual(matrix.entry("a", "overall"), matrix.entry("overall", "a"))

    def test_monotone_transform_gives_one(self):
        x = np.linspace(-2, 2, 15)
        matrix = attribute_correlation_matrix(np.column_stack([x, np.exp(x)]))
        self.assertEqual(matrix.matrix[0, 1], 1.0)

    def test_constant_column_flagged(self):
        table = np.column_stack([np.arange(5.0), np.ones(5), np.arange(5.0) ** 2])
        with self.assertLogs("aesthetic_assessment.evaluation", level="WARNING"):
            matrix = attribute_correlation_matrix(table, ["overall", "flat", "sq"])
        self.assertTrue(math.isnan(matrix.entry("overall", "flat")))
        self.assertIn(("overall", "flat"), matrix.undefined)
        self.assertIn(("flat", "sq"), matrix.undefined)
        self.assertEqual(matrix.entry("overall", "sq"), 1.0)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(2)
        table = rng.normal(size=(25, 3))
        permuted = table[rng.permutation(25)]
        np.testing.assert_allclose(
            attribute_correlation_matrix(table).matrix, attribute_correlation_matrix(permuted).matrix, atol=1e-12
        )


class HumanConsistencyTests(SimpleTestCase):
    ROWS = [("(0,100)", 190, 0.6738), ("[100,200)", 65, 0.7013), ("[200,inf)", 42, 0.7112)]

    def test_verdicts(self):
        verdicts = [row.verdict for row in human_consistency_table(0.7067, self.ROWS)]
        self.assertEqual(verdicts, ["above", "above", "below"])

    def test_tie(self):
        self.assertEqual(human_consistency_table(0.7013, self.ROWS)[1].verdict, "tie")


class EvaluateTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        directory = Path(self.tmp.name)
        self.weights = write_tiny_weights(directory / "tiny.pt")
        self.records = synthetic_records(directory, EVA_SCHEMA, 10, seed=4)

    def _net(self, output_units=5):
        return tiny_network(output_units=output_units, weights_path=self.weights, seed=1)

    def test_report_contents(self):
        net = self._net()
        first = evaluate(net, self.records, EVA_SCHEMA, stage="training")
        report = evaluate(net, self.records, EVA_SCHEMA, stage="fine_tuning", previous=first)
        self.assertEqual(list(report.columns), ["training", "fine_tuning"])
        self.assertEqual(set(report.columns["fine_tuning"]), set(EVA_SCHEMA.target_names))
        for value in report.columns["fine_tuning"].values():
            if value is not None:
                self.assertLessEqual(abs(value), 1.0)
        self.assertEqual(report.test_size, 10)
        self.assertEqual(report.frequency_table.total, 10)
        low, high = report.prediction_range
        self.assertTrue(0.0 <= low <= high <= 10.0)
        self.assertEqual(report.ground_truth_correlations.labels, EVA_SCHEMA.target_names)
        self.assertEqual(report.to_dict()["test_size"], 10)

    def test_cross_evaluate_matches_own_report(self):
        net = self._net()
        report = evaluate(net, self.records, EVA_SCHEMA)
        self.assertEqual(cross_evaluate(net, self.records), report.overall_rho)

    def test_constant_outputs_surface_undefined_correlations(self):
        net = self._net()
        with torch.no_grad():
            net.head.output.weight.zero_()
            net.head.output.bias.zero_()
        report = evaluate(net, self.records, EVA_SCHEMA)
        self.assertEqual(set(report.columns["fine_tuning"].values()), {None})
        self.assertEqual(set(report.errors["fine_tuning"]), set(EVA_SCHEMA.target_names))
        with self.assertRaises(UndefinedCorrelationError):
            report.rho("overall")

    def test_single_task_network_against_multi_target_schema(self):
        report = evaluate(self._net(output_units=1), self.records, EVA_SCHEMA)
        self.assertIsNotNone(report.columns["fine_tuning"]["overall"])
        self.assertIsNone(report.columns["fine_tuning"]["quality"])
        self.assertIn("no output", report.errors["fine_tuning"]["quality"])
        self.assertIsNone(report.prediction_correlations)

    def test_three_records_log_without_p_value(self):
        with self.assertLogs("aesthetic_assessment.evaluation", level="INFO") as logs:
            report = evaluate(self._net(), self.records[:3], EVA_SCHEMA)
        self.assertIsNotNone(report.overall_rho)
        self.assertIsNone(report.p_values["fine_tuning"])
        self.assertTrue(any("p=n/a" in line for line in logs.output))

    def test_empty_records(self):
        with self.assertRaises(EmptySplitError):
            evaluate(self._net(), [], EVA_SCHEMA)

    def test_output_count_mismatch(self):
        with self.assertRaises(CheckpointMismatchError):
            evaluate(self._net(output_units=3), self.records, EVA_SCHEMA)

    def test_extremes_and_coverage(self):
        report = evaluate(self._net(), self.records, EVA_SCHEMA)
        best, worst = prediction_extremes(report, k=2)
        self.assertEqual(len(best), 2)
        self.assertLessEqual(abs(best[0][1] - best[0][2]), abs(worst[0][1] - worst[0][2]))
        self.assertEqual(prediction_coverage([1.0, 2.0, 3.0, 4.0], [2.0, 3.0]), 0.5)
