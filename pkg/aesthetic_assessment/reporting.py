"""Report files, plots and side-by-side comparison tables."""

import json
import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import yaml  # noqa: E402

from .evaluation import EvalReport  # noqa: E402

logger = logging.getLogger(__name__)

REFERENCE_RESULTS_PATH = Path(__file__).resolve().parent / "reference_results.yaml"

# No timestamps or version strings, so identical inputs give identical PNG bytes.
PNG_METADATA = {"Software": None}


def load_reference_results(path=REFERENCE_RESULTS_PATH):
    with open(path, encoding="utf-8") as handle:
        return yaml.safe_load(handle)


def _save_figure(fig, path):
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def plot_scatter(report, path):
    truth = [gt for _, gt, _ in report.scatter]
    predictions = [p for _, _, p in report.scatter]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(truth, predictions, s=6, alpha=0.6, color="tab:blue")
    low = min(truth + predictions)
    high = max(truth + predictions)
    ax.plot([low, high], [low, high], linestyle="--", linewidth=1, color="gray")
    ax.set_xlabel("Ground-truth overall score")
    ax.set_ylabel("Predicted overall score")
    ax.set_title(f"{report.benchmark.upper()} test set ({report.final_column})")
    fig.tight_layout()
    _save_figure(fig, path)


def plot_heatmap(matrix, path, title):
    fig, ax = plt.subplots(figsize=(7, 6))
    image = ax.imshow(np.ma.masked_invalid(matrix.matrix), vmin=-1.0, vmax=1.0, cmap="coolwarm")
    ax.set_xticks(range(len(matrix.labels)), matrix.labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(matrix.labels)), matrix.labels, fontsize=7)
    ax.set_title(title)
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    _save_figure(fig, path)


def _matrix_frame(matrix):
    return pd.DataFrame(matrix.matrix, index=list(matrix.labels), columns=list(matrix.labels))


def write_report(report, directory):
    """
    Write report.json plus CSV companions and PNG plots into directory.

    Outputs are fully determined by the report, so rewriting an unchanged
    report reproduces every file byte for byte.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    (directory / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    pd.DataFrame(report.scatter, columns=["image", "ground_truth", "prediction"]).to_csv(
        directory / "scatter.csv", index=False, lineterminator="\n"
    )
    if report.frequency_table is not None:
        pd.DataFrame(
            report.frequency_table.rows(), columns=["low", "high", "count", "percentage"]
        ).to_csv(directory / "frequencies.csv", index=False, lineterminator="\n")

    correlations = {
        "ground_truth": report.ground_truth_correlations,
        "predictions": report.prediction_correlations,
    }
    for name, matrix in correlations.items():
        if matrix is None:
            continue
        _matrix_frame(matrix).to_csv(directory / f"correlations_{name}.csv", lineterminator="\n")
        plot_heatmap(matrix, directory / f"correlations_{name}.png", f"Spearman rho ({name.replace('_', ' ')})")

    if report.scatter:
        plot_scatter(report, directory / "scatter.png")
    logger.info("Wrote evaluation report to %s", directory)
    return directory


def _overall(value, column):
    if isinstance(value, EvalReport):
        return value.columns.get(column, {}).get("overall")
    return (value or {}).get(column)


def task_setting_comparison(multi, single, columns=("training", "fine_tuning")):
    """
    Overall rho of multi-task against single-task networks per checkpoint.

    multi and single are EvalReports or {column: rho} mappings. Columns missing
    from either side are left out.
    """
    rows = []
    for column in columns:
        multi_rho = _overall(multi, column)
        single_rho = _overall(single, column)
        if multi_rho is None or single_rho is None:
            continue
        rows.append(
            {
                "column": column,
                "multi_task": multi_rho,
                "single_task": single_rho,
                "difference": multi_rho - single_rho,
                "multi_task_better": multi_rho > single_rho,
            }
        )
    return rows


def cross_dataset_table(entries):
    """Train-benchmark rows by test-benchmark columns from (train, test, rho) entries."""
    frame = pd.DataFrame(list(entries), columns=["train", "test", "rho"])
    if frame.duplicated(["train", "test"]).any():
        raise ValueError("Each (train, test) benchmark pair may appear only once")
    table = frame.pivot(index="train", columns="test", values="rho")
    labels = sorted(set(table.index) | set(table.columns))
    return table.reindex(index=labels, columns=labels)


def format_rho(value, digits=4):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.{digits}f}"


def format_human_consistency(rows):
    lines = [f"{'Raters band':<14}{'Raters':>8}{'Human rho':>12}{'Model rho':>12}  Verdict"]
    for row in rows:
        lines.append(
            f"{row.band:<14}{row.raters:>8}{format_rho(row.rho):>12}{format_rho(row.model_rho):>12}  {row.verdict}"
        )
    return "\n".join(lines)


def format_task_comparison(rows):
    lines = [f"{'Checkpoint':<14}{'Single-task':>13}{'Multi-task':>12}{'Diff':>9}"]
    for row in rows:
        lines.append(
            f"{row['column']:<14}{format_rho(row['single_task']):>13}"
            f"{format_rho(row['multi_task']):>12}{row['difference']:>+9.4f}"
        )
    return "\n".join(lines)


def format_cross_dataset(table):
    columns = list(table.columns)
    corner = "Train / Test"
    lines = [f"{corner:<14}" + "".join(f"{c.upper():>10}" for c in columns)]
    for train, row in table.iterrows():
        lines.append(f"{train.upper():<14}" + "".join(f"{format_rho(row[c], 3):>10}" for c in columns))
    return "\n".join(lines)


def format_attribute_comparison(report, reference=None):
    """Per-target rho for every report column, with the reference column when known."""
    reference = reference or {}
    columns = list(report.columns)
    header = f"{'Target':<24}" + "".join(f"{c:>14}" for c in columns)
    if reference:
        header += "".join(f"{'ref ' + c:>18}" for c in columns)
    lines = [header]
    for target in report.target_names:
        line = f"{target:<24}" + "".join(f"{format_rho(report.columns[c].get(target), 3):>14}" for c in columns)
        if reference:
            line += "".join(f"{format_rho(reference.get(c, {}).get(target), 3):>18}" for c in columns)
        lines.append(line)
    return "\n".join(lines)
