"""Rank-correlation metrics and evaluation reports for trained networks."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import stats

from .dataset import AestheticDataset, make_loader
from .exceptions import CheckpointMismatchError, EmptySplitError, UndefinedCorrelationError
from .schema import OVERALL, Benchmark

logger = logging.getLogger(__name__)

# Ground-truth overall intervals used for the published frequency tables.
FREQUENCY_EDGES = {
    Benchmark.AADB: (0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 1.00),
    Benchmark.EVA: (1.70, 2.00, 3.00, 4.00, 5.00, 6.00, 7.00, 8.00, 9.00, 9.50),
}


@dataclass(frozen=True)
class FrequencyTable:
    edges: tuple
    counts: tuple
    percentages: tuple

    @property
    def total(self):
        return sum(self.counts)

    def rows(self):
        return [
            (self.edges[i], self.edges[i + 1], self.counts[i], self.percentages[i])
            for i in range(len(self.counts))
        ]


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple
    matrix: np.ndarray
    undefined: tuple = ()

    def entry(self, row, column):
        return float(self.matrix[self.labels.index(row), self.labels.index(column)])

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "matrix": [[None if math.isnan(v) else round(float(v), 10) for v in row] for row in self.matrix],
            "undefined": [list(pair) for pair in self.undefined],
        }


@dataclass
class EvalReport:
    """
    Per-target correlations for one or more checkpoints of the same network.

    columns maps a checkpoint label (e.g. training, fine_tuning) to
    {target: rho or None}; errors holds the reason for every None.
    """

    benchmark: str
    target_names: tuple
    columns: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)
    prediction_range: tuple = (None, None)
    ground_truth_range: tuple = (None, None)
    frequency_table: FrequencyTable = None
    scatter: list = field(default_factory=list)
    ground_truth_correlations: CorrelationMatrix = None
    prediction_correlations: CorrelationMatrix = None

    @property
    def final_column(self):
        return list(self.columns)[-1]

    @property
    def test_size(self):
        return len(self.scatter)

    def rho(self, target=OVERALL, column=None):
        column = column or self.final_column
        value = self.columns[column].get(target)
        if value is None:
            raise UndefinedCorrelationError(
                self.errors.get(column, {}).get(target, f"No correlation for '{target}'")
            )
        return value

    @property
    def overall_rho(self):
        return self.rho(OVERALL)

    def to_dict(self):
        return {
            "benchmark": self.benchmark,
            "target_names": list(self.target_names),
            "test_size": self.test_size,
            "columns": self.columns,
            "errors": self.errors,
            "p_values": self.p_values,
            "prediction_range": list(self.prediction_range),
            "ground_truth_range": list(self.ground_truth_range),
            "prediction_coverage": prediction_coverage(
                [gt for _, gt, _ in self.scatter], [p for _, _, p in self.scatter]
            )
            if self.scatter
            else None,
            "frequency_table": [
                {"low": lo, "high": hi, "count": c, "percentage": round(p, 6)}
                for lo, hi, c, p in self.frequency_table.rows()
            ]
            if self.frequency_table
            else None,
            "ground_truth_correlations": self.ground_truth_correlations.to_dict()
            if self.ground_truth_correlations
            else None,
            "prediction_correlations": self.prediction_correlations.to_dict()
            if self.prediction_correlations
            else None,
        }


def spearman_rho(a, b):
    """Pearson correlation of average ranks; ties share the mean of their positions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"Expected two equal-length vectors, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise UndefinedCorrelationError(f"Spearman's rho needs at least 2 samples, got {len(a)}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("Spearman's rho needs finite values")
    ra = stats.rankdata(a, method="average")
    rb = stats.rankdata(b, method="average")
    ra -= ra.mean()
    rb -= rb.mean()
    denominator = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denominator == 0.0:
        raise UndefinedCorrelationError("Rank variance is zero (constant input)")
    return float(np.clip(float(ra @ rb) / denominator, -1.0, 1.0))


def rho_significance(rho, n):
    """Two-sided p-value from t = rho * sqrt((n - 2) / (1 - rho^2)) with n - 2 dof."""
    if n < 4:
        raise ValueError(f"Significance needs n >= 4, got {n}")
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def permutation_significance(a, b, resamples=10_000, seed=0, chunk=2_000):
    """Two-sided permutation p-value for Spearman's rho; slow verification mode."""
    observed = abs(spearman_rho(a, b))
    ra = stats.rankdata(np.asarray(a, dtype=np.float64), method="average")
    rb = stats.rankdata(np.asarray(b, dtype=np.float64), method="average")
    ra = (ra - ra.mean()) / np.linalg.norm(ra - ra.mean())
    rb = (rb - rb.mean()) / np.linalg.norm(rb - rb.mean())
    rng = np.random.default_rng(seed)
    exceed = 0
    remaining = resamples
    while remaining:
        size = min(chunk, remaining)
        permuted = rb[rng.permuted(np.tile(np.arange(len(rb)), (size, 1)), axis=1)]
        exceed += int((np.abs(permuted @ ra) >= observed - 1e-12).sum())
        remaining -= size
    return (exceed + 1) / (resamples + 1)


def interval_frequencies(scores, edges):
    """Histogram over half-open bins [e_i, e_i+1); the last bin is closed."""
    edges = np.asarray(edges, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("Bin edges must be strictly increasing with at least two values")
    if scores.size and (scores.min() < edges[0] or scores.max() > edges[-1]):
        raise ValueError(
            f"Scores span [{scores.min()}, {scores.max()}], outside edges [{edges[0]}, {edges[-1]}]"
        )
    counts, _ = np.histogram(scores, bins=edges)
    n = max(int(counts.sum()), 1)
    return FrequencyTable(
        edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        percentages=tuple(float(c) / n for c in counts),
    )


def attribute_correlation_matrix(table, labels=None):
    """Pairwise Spearman rho over columns; undefined entries are NaN and listed."""
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 2:
        raise ValueError("Need an n x m score table with n >= 2")
    m = table.shape[1]
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(m))
    matrix = np.eye(m)
    undefined = []
    for i in range(m):
        for j in range(i + 1, m):
            try:
                value = spearman_rho(table[:, i], table[:, j])
            except UndefinedCorrelationError:
                value = float("nan")
                undefined.append((labels[i], labels[j]))
            matrix[i, j] = matrix[j, i] = value
    if undefined:
        logger.warning("Undefined correlations for %d column pair(s)", len(undefined))
    return CorrelationMatrix(labels=labels, matrix=matrix, undefined=tuple(undefined))


def predict(net, records, batch_size=64, device="cpu", num_workers=0):
    """Eval-mode predictions on the unit scale, shape (n, output_units)."""
    dataset = AestheticDataset(records, target_size=net.input_size, num_outputs=net.output_units)
    net.to(device)
    net.eval()
    outputs = []
    with torch.no_grad():
        for batch in make_loader(dataset, batch_size, num_workers=num_workers):
            outputs.append(net(batch.images.to(device)).cpu().double())
    if not outputs:
        return np.empty((0, net.output_units))
    return torch.cat(outputs).numpy()


def prediction_coverage(ground_truth, predictions):
    """Share of ground-truth scores that fall inside the predicted range."""
    ground_truth = np.asarray(ground_truth, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    inside = (ground_truth >= predictions.min()) & (ground_truth <= predictions.max())
    return float(inside.mean())


def _frequency_table(scores, schema):
    edges = FREQUENCY_EDGES.get(schema.benchmark)
    if edges is not None:
        try:
            return interval_frequencies(scores, edges)
        except ValueError as e:
            logger.warning("Published intervals do not cover the test scores (%s); using ten even bins", e)
    low, high = schema.overall_range.low, schema.overall_range.high
    return interval_frequencies(scores, np.linspace(low, high, 11))


def evaluate(
    net,
    records,
    schema,
    stage="fine_tuning",
    previous=None,
    device="cpu",
    batch_size=64,
    num_workers=0,
):
    """
    Correlate predictions with ground truth per target.

    A single-output network is accepted against a multi-target schema: the
    overall correlation is reported and every attribute carries a mismatch
    error. previous carries earlier checkpoint columns into the new report.
    """
    if not records:
        raise EmptySplitError("No records to evaluate")
    units = net.output_units
    if units not in (1, schema.num_targets):
        raise CheckpointMismatchError(
            f"Network has {units} outputs; schema {schema.benchmark.value} expects "
            f"{schema.num_targets} (or 1 for a single-task network)"
        )
    predictions = predict(net, records, batch_size=batch_size, device=device, num_workers=num_workers)
    ground_truth = np.array([r.normalized_targets for r in records], dtype=np.float64)
    raw_truth = np.array([r.raw_targets for r in records], dtype=np.float64)
    raw_predictions = schema.lows[:units] + predictions * schema.widths[:units]

    column, errors = {}, {}
    for j, name in enumerate(schema.target_names):
        if j >= units:
            column[name] = None
            errors[name] = f"Checkpoint has no output for attribute '{name}' (single-task network)"
            continue
        try:
            column[name] = spearman_rho(ground_truth[:, j], predictions[:, j])
        except UndefinedCorrelationError as e:
            column[name] = None
            errors[name] = f"{name}: {e}"
            logger.warning("Correlation for %s undefined: %s", name, e)

    report = EvalReport(benchmark=schema.benchmark.value, target_names=schema.target_names)
    if previous is not None:
        report.columns.update(previous.columns)
        report.errors.update(previous.errors)
        report.p_values.update(previous.p_values)
    report.columns[stage] = column
    report.errors[stage] = errors
    overall = column[OVERALL]
    report.p_values[stage] = rho_significance(overall, len(records)) if overall is not None and len(records) >= 4 else None

    report.prediction_range = (float(raw_predictions[:, 0].min()), float(raw_predictions[:, 0].max()))
    report.ground_truth_range = (float(raw_truth[:, 0].min()), float(raw_truth[:, 0].max()))
    report.frequency_table = _frequency_table(raw_truth[:, 0], schema)
    report.scatter = [
        (record.name, float(gt), float(pred))
        for record, gt, pred in zip(records, raw_truth[:, 0], raw_predictions[:, 0])
    ]
    report.ground_truth_correlations = attribute_correlation_matrix(raw_truth, schema.target_names)
    if units > 1:
        report.prediction_correlations = attribute_correlation_matrix(
            raw_predictions, schema.target_names[:units]
        )
    if overall is not None:
        p_value = report.p_values[stage]
        logger.info(
            "%s overall rho %.4f (p=%s) on %d images",
            stage,
            overall,
            "n/a" if p_value is None else f"{p_value:.3g}",
            len(records),
        )
    return report


def cross_evaluate(net, records, device="cpu", batch_size=64, num_workers=0):
    """Overall-score rho of a network on another benchmark's records; attribute outputs are ignored."""
    predictions = predict(net, records, batch_size=batch_size, device=device, num_workers=num_workers)
    ground_truth = np.array([r.normalized_targets[0] for r in records], dtype=np.float64)
    return spearman_rho(ground_truth, predictions[:, 0])


@dataclass(frozen=True)
class HumanComparison:
    band: str
    raters: int
    rho: float
    model_rho: float

    @property
    def verdict(self):
        if self.model_rho > self.rho:
            return "above"
        if self.model_rho < self.rho:
            return "below"
        return "tie"


def human_consistency_table(report, reference_rows):
    """
    Rank the model's overall rho against per-band human consistency.

    reference_rows are (rating-count band, rater count, rho) tuples; report may
    be an EvalReport or a plain rho value.
    """
    model_rho = report.overall_rho if isinstance(report, EvalReport) else float(report)
    return [
        HumanComparison(band=str(band), raters=int(raters), rho=float(rho), model_rho=model_rho)
        for band, raters, rho in reference_rows
    ]


def prediction_extremes(report, k=5):
    """The k smallest- and k largest-error overall predictions as (image, truth, prediction)."""
    ranked = sorted(report.scatter, key=lambda item: (abs(item[1] - item[2]), item[0]))
    return ranked[:k], ranked[::-1][:k]
