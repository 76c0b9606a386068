"""
Accuracy metrics over actual vs predicted relative concentrations.
"""

from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.config.logger_config import log
from src.core.exceptions import (
    DegenerateRegressionError,
    InvalidReductionError,
    ShapeError,
)
from src.domain.results import EvaluationRecord, EvaluationReport, RegressionStats
from src.domain.spectra import Dataset

GLX = "GLX"
GLX_MEMBERS = ("Glu", "Gln")


class SigmaVariant(str, Enum):
    # sqrt(mean((p - eps)^2))
    PRINTED = "printed"
    # sqrt(mean((|a - p| - eps)^2))
    CONVENTIONAL = "conventional"


def mean_abs_error(
    rec: EvaluationRecord, variant: SigmaVariant = SigmaVariant.PRINTED
) -> Tuple[float, float]:
    """
    Mean absolute error over all samples and metabolites, with its spread.

    Returns:
        (epsilon, sigma) where epsilon = mean |a - p| and sigma follows `variant`.
    Raises:
        ShapeError: If the record is empty.
    """
    if rec.count == 0 or not rec.labels:
        raise ShapeError("Cannot score an empty evaluation record")
    diff = np.abs(rec.actual - rec.predicted)
    epsilon = float(diff.mean())
    if SigmaVariant(variant) == SigmaVariant.CONVENTIONAL:
        spread = diff - epsilon
    else:
        spread = rec.predicted - epsilon
    return epsilon, float(np.sqrt(np.mean(spread * spread)))


def mape_per_metabolite(rec: EvaluationRecord) -> Dict[str, Optional[float]]:
    """
    Mean absolute percentage error per metabolite over entries with a positive
    actual value; metabolites without any positive actual map to None.
    """
    result: Dict[str, Optional[float]] = {}
    for j, label in enumerate(rec.labels):
        actual = rec.actual[:, j]
        positive = actual > 0.0
        if not positive.any():
            result[label] = None
            continue
        errors = np.abs(actual[positive] - rec.predicted[positive, j]) / actual[positive]
        result[label] = float(100.0 * errors.mean())
    return result


def _resolve_keep(labels: Sequence[str], keep: Iterable[str]) -> List[str]:
    by_key = {label.lower(): label for label in labels}
    resolved = []
    for name in keep:
        label = by_key.get(name.strip().lower())
        if label is None:
            raise InvalidReductionError(
                f"'{name}' is not one of the labels {list(labels)}"
            )
        if label not in resolved:
            resolved.append(label)
    return resolved


def _merge_glx(
    labels: Tuple[str, ...], actual: np.ndarray, predicted: np.ndarray
) -> Tuple[Tuple[str, ...], np.ndarray, np.ndarray]:
    members = [labels.index(m) for m in GLX_MEMBERS if m in labels]
    if not members:
        return labels, actual, predicted
    first = min(members)
    merged_labels, columns = [], []
    for j, label in enumerate(labels):
        if j in members and j != first:
            continue
        if j == first:
            merged_labels.append(GLX)
            columns.append(members)
        else:
            merged_labels.append(label)
            columns.append([j])

    def combine(matrix: np.ndarray) -> np.ndarray:
        return np.stack([matrix[:, cols].sum(axis=1) for cols in columns], axis=1)

    return tuple(merged_labels), combine(actual), combine(predicted)


def rescale_reduced(
    rec: EvaluationRecord, keep: Iterable[str], merge_glx: bool = False
) -> EvaluationRecord:
    """
    Restrict a record to a reduced metabolite set and renormalise each row to sum 1.

    With `merge_glx`, Glu and Gln are summed into a GLX column first, and
    `keep` may name GLX. Rows whose actual reduced sum is zero are dropped and
    counted in `excluded_rows`; the same rows drop for every predictor. Rows
    whose predicted reduced sum is zero stay as all-zero predictions and are
    counted in `zero_predictions`.

    Raises:
        InvalidReductionError: If `keep` is empty or names an unknown label.
    """
    keep = list(keep)
    if not keep:
        raise InvalidReductionError("Reduced metabolite set is empty")

    labels, actual, predicted = rec.labels, rec.actual, rec.predicted
    if merge_glx:
        labels, actual, predicted = _merge_glx(labels, actual, predicted)

    kept = _resolve_keep(labels, keep)
    columns = [labels.index(name) for name in kept]
    actual = actual[:, columns]
    predicted = predicted[:, columns]

    actual_sum = actual.sum(axis=1)
    predicted_sum = predicted.sum(axis=1)
    valid = actual_sum > 0.0
    excluded = int(np.count_nonzero(~valid))
    if excluded:
        log.warning("Rows excluded from reduced set", excluded=excluded, keep=kept)

    actual, predicted, predicted_sum = actual[valid], predicted[valid], predicted_sum[valid]
    empty = predicted_sum <= 0.0
    zero_predictions = int(np.count_nonzero(empty))
    if zero_predictions:
        log.warning(
            "Predictions with no mass in the reduced set", rows=zero_predictions, keep=kept
        )
    safe_sum = np.where(empty, 1.0, predicted_sum)

    return EvaluationRecord(
        actual=actual / actual_sum[valid, None],
        predicted=np.where(empty[:, None], 0.0, predicted / safe_sum[:, None]),
        labels=tuple(kept),
        excluded_rows=rec.excluded_rows + excluded,
        zero_predictions=rec.zero_predictions + zero_predictions,
    )


def linregress(x: Sequence[float], y: Sequence[float]) -> RegressionStats:
    """
    Ordinary least squares of y on x with the two-sided t-test p-value of a
    zero slope.

    Raises:
        DegenerateRegressionError: With fewer than 3 points, unequal lengths or constant x.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateRegressionError(f"x {x.shape} and y {y.shape} must be equal 1-D")
    if x.size < 3:
        raise DegenerateRegressionError(f"Regression needs at least 3 points, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DegenerateRegressionError("Regression x values are all equal")

    fit = stats.linregress(x, y)
    values = (fit.slope, fit.intercept, fit.rvalue, fit.pvalue, fit.stderr)
    if not all(np.isfinite(values)):
        raise DegenerateRegressionError("Regression produced non-finite statistics")
    return RegressionStats(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(min(max(fit.rvalue**2, 0.0), 1.0)),
        p_value=float(min(max(fit.pvalue, 0.0), 1.0)),
        std_error=float(abs(fit.stderr)),
    )


def regression_per_metabolite(
    rec: EvaluationRecord,
) -> Dict[str, Optional[RegressionStats]]:
    """Predicted-vs-actual regression per label; None where it is degenerate."""
    result: Dict[str, Optional[RegressionStats]] = {}
    for j, label in enumerate(rec.labels):
        try:
            result[label] = linregress(rec.actual[:, j], rec.predicted[:, j])
        except DegenerateRegressionError:
            result[label] = None
    return result


def record_for(
    dataset: Dataset, predicted: np.ndarray, predictor_labels: Sequence[str]
) -> EvaluationRecord:
    """
    Align a prediction matrix (columns in `predictor_labels` order) with the
    dataset's labels.

    Raises:
        ShapeError: If the predictor lacks a dataset label or the row counts differ.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    if predicted.shape[0] != len(dataset):
        raise ShapeError(
            f"{predicted.shape[0]} predictions for a dataset of {len(dataset)} samples"
        )
    missing = [m for m in dataset.metabolites if m not in predictor_labels]
    if missing:
        raise ShapeError(f"Predictor does not report {missing}")
    order = [list(predictor_labels).index(m) for m in dataset.metabolites]
    return EvaluationRecord(
        actual=dataset.labels(),
        predicted=np.clip(predicted[:, order], 0.0, None),
        labels=tuple(dataset.metabolites),
    )


def build_report(
    rec: EvaluationRecord,
    predictor: str,
    dataset: str,
    keep: Optional[Iterable[str]] = None,
    merge_glx: bool = False,
) -> EvaluationReport:
    """Score a record, optionally on a reduced metabolite set."""
    reduction = None
    if keep:
        rec = rescale_reduced(rec, keep, merge_glx)
        reduction = list(rec.labels)
    elif merge_glx:
        labels, actual, predicted = _merge_glx(rec.labels, rec.actual, rec.predicted)
        rec = EvaluationRecord(
            actual=actual,
            predicted=predicted,
            labels=labels,
            excluded_rows=rec.excluded_rows,
            zero_predictions=rec.zero_predictions,
        )

    epsilon, sigma = mean_abs_error(rec, SigmaVariant.PRINTED)
    _, sigma_conventional = mean_abs_error(rec, SigmaVariant.CONVENTIONAL)
    report = EvaluationReport(
        predictor=predictor,
        dataset=dataset,
        count=rec.count,
        labels=list(rec.labels),
        epsilon=epsilon,
        sigma=sigma,
        sigma_conventional=sigma_conventional,
        mape=mape_per_metabolite(rec),
        regression=regression_per_metabolite(rec),
        excluded_rows=rec.excluded_rows,
        zero_predictions=rec.zero_predictions,
        reduction=reduction,
        merge_glx=merge_glx,
    )
    log.info(
        "Evaluation complete",
        predictor=predictor,
        dataset=dataset,
        count=report.count,
        epsilon=round(epsilon, 6),
        sigma=round(sigma, 6),
    )
    return report


def evaluate(
    predictor,
    dataset: Dataset,
    dataset_name: str = "",
    keep: Optional[Iterable[str]] = None,
    merge_glx: bool = False,
) -> EvaluationReport:
    """
    Run a predictor over a labelled dataset and report its accuracy.

    `predictor` is any object with `name`, `metabolites` and
    `quantify_many(samples) -> (N, L) array`, such as the network and NNLS
    quantifiers.
    """
    if len(dataset) == 0:
        raise ShapeError("Cannot evaluate an empty dataset")
    predicted = predictor.quantify_many(dataset.samples)
    rec = record_for(dataset, predicted, predictor.metabolites)
    return build_report(
        rec, predictor.name, dataset_name or dataset.basis_tag, keep, merge_glx
    )
