import numpy as np
import pytest
from scipy import stats

from src.application.evaluation_service import (
    SigmaVariant,
    build_report,
    evaluate,
    linregress,
    mape_per_metabolite,
    mean_abs_error,
    rescale_reduced,
)
from src.core.exceptions import DegenerateRegressionError, InvalidReductionError, ShapeError
from src.domain.results import EvaluationRecord
from src.domain.spectra import Dataset
from src.infrastructure.storage.report_store import load_report, save_report

LABELS = ("NAA", "Cr", "GABA", "Glu", "Gln")


def _record(actual, predicted, labels):
    return EvaluationRecord(actual=actual, predicted=predicted, labels=tuple(labels))


class _PerfectPredictor:
    name = "perfect"
    metabolites = LABELS

    def __init__(self, dataset):
        self.dataset = dataset

    def quantify_many(self, samples):
        return np.stack([s.label_vector(LABELS) for s in samples])


class _ConstantPredictor:
    name = "constant"
    metabolites = LABELS

    def quantify_many(self, samples):
        return np.full((len(samples), len(LABELS)), 1.0 / len(LABELS))


class TestMeanAbsError:
    def test_perfect(self):
        a = np.array([[0.5, 0.5], [0.2, 0.8]])
        assert mean_abs_error(_record(a, a, ("A", "B")))[0] == 0.0

    def test_hand_example(self):
        rec = _record([[1.0, 0.0], [0.0, 1.0]], [[0.9, 0.1], [0.2, 0.8]], ("A", "B"))
        assert mean_abs_error(rec)[0] == pytest.approx(0.15)

    def test_brute_force(self, rng):
        a = rng.dirichlet(np.ones(5), size=100)
        p = rng.dirichlet(np.ones(5), size=100)
        rec = _record(a, p, LABELS)
        total, spread_printed, spread_conventional = 0.0, 0.0, 0.0
        for i in range(100):
            for j in range(5):
                total += abs(a[i, j] - p[i, j])
        epsilon = total / 500
        for i in range(100):
            for j in range(5):
                spread_printed += (p[i, j] - epsilon) ** 2
                spread_conventional += (abs(a[i, j] - p[i, j]) - epsilon) ** 2
        assert mean_abs_error(rec)[0] == pytest.approx(epsilon, abs=1e-12)
        assert mean_abs_error(rec)[1] == pytest.approx(np.sqrt(spread_printed / 500), abs=1e-12)
        conventional = mean_abs_error(rec, SigmaVariant.CONVENTIONAL)[1]
        assert conventional == pytest.approx(np.sqrt(spread_conventional / 500), abs=1e-12)

    def test_empty_record(self):
        with pytest.raises(ShapeError):
            mean_abs_error(_record(np.zeros((0, 2)), np.zeros((0, 2)), ("A", "B")))


class TestMape:
    def test_hand_example(self):
        rec = _record([[2.0], [4.0]], [[1.0], [5.0]], ("A",))
        assert mape_per_metabolite(rec)["A"] == pytest.approx(37.5)

    def test_perfect(self):
        rec = _record([[0.3, 0.7]], [[0.3, 0.7]], ("A", "B"))
        assert mape_per_metabolite(rec) == {"A": 0.0, "B": 0.0}

    def test_zero_actual_is_excluded(self):
        rec = _record([[0.0], [1.0]], [[0.2], [1.0]], ("A",))
        assert mape_per_metabolite(rec)["A"] == 0.0

    def test_no_positive_actual(self):
        rec = _record([[0.0], [0.0]], [[0.2], [0.1]], ("A",))
        assert mape_per_metabolite(rec)["A"] is None


class TestRescaleReduced:
    def test_keep_two(self):
        rec = _record([[0.6, 0.2, 0.2]], [[0.6, 0.2, 0.2]], ("NAA", "GABA", "Cr"))
        reduced = rescale_reduced(rec, ["NAA", "GABA"])
        np.testing.assert_allclose(reduced.actual, [[0.75, 0.25]])
        assert reduced.labels == ("NAA", "GABA")

    def test_keep_all(self, rng):
        a = rng.dirichlet(np.ones(5), size=4)
        reduced = rescale_reduced(_record(a, a, LABELS), LABELS)
        np.testing.assert_allclose(reduced.actual, a)

    def test_glx_merge(self):
        rec = _record([[0.3, 0.2, 0.4, 0.1]], [[0.3, 0.2, 0.4, 0.1]], ("NAA", "GABA", "Glu", "Gln"))
        reduced = rescale_reduced(rec, ["naa", "gaba", "glx"], merge_glx=True)
        assert reduced.labels == ("NAA", "GABA", "GLX")
        np.testing.assert_allclose(reduced.actual, [[0.3, 0.2, 0.5]])

    def test_zero_actual_rows_are_excluded(self):
        rec = _record(
            [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]], [[0.1, 0.1, 0.8], [0.5, 0.5, 0.0]], ("A", "B", "C")
        )
        reduced = rescale_reduced(rec, ["A", "B"])
        assert reduced.count == 1
        assert reduced.excluded_rows == 1

    def test_zero_predicted_rows_are_kept(self):
        actual = [[0.4, 0.4, 0.2], [0.5, 0.5, 0.0]]
        rec = _record(actual, [[0.0, 0.0, 1.0], [0.25, 0.5, 0.25]], ("A", "B", "C"))
        reduced = rescale_reduced(rec, ["A", "B"])
        assert reduced.count == 2
        assert (reduced.excluded_rows, reduced.zero_predictions) == (0, 1)
        np.testing.assert_allclose(reduced.predicted, [[0.0, 0.0], [1 / 3, 2 / 3]])
        np.testing.assert_allclose(reduced.actual, [[0.5, 0.5], [0.5, 0.5]])

    def test_predictors_keep_equal_counts(self):
        actual = [[0.4, 0.4, 0.2], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]
        good = _record(actual, actual, ("A", "B", "C"))
        poor = _record(actual, [[0.0, 0.0, 1.0]] * 3, ("A", "B", "C"))
        counts = [rescale_reduced(rec, ["A", "B"]).count for rec in (good, poor)]
        assert counts == [2, 2]

    def test_empty_keep(self):
        with pytest.raises(InvalidReductionError):
            rescale_reduced(_record([[1.0]], [[1.0]], ("A",)), [])

    def test_unknown_label(self):
        with pytest.raises(InvalidReductionError):
            rescale_reduced(_record([[1.0]], [[1.0]], ("A",)), ["Lac"])


class TestLinregress:
    def test_identity(self):
        fit = linregress([0.1, 0.4, 0.7, 0.9], [0.1, 0.4, 0.7, 0.9])
        assert fit.slope == pytest.approx(1.0)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_exact_line(self):
        fit = linregress([0, 1, 2], [0, 2, 4])
        assert (fit.slope, fit.r_squared) == (pytest.approx(2.0), pytest.approx(1.0))
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)

    def test_textbook_ols(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        y = np.array([2.0, 1.0, 4.0, 3.0])
        n = x.size
        sxx = np.sum((x - x.mean()) ** 2)
        sxy = np.sum((x - x.mean()) * (y - y.mean()))
        slope = sxy / sxx
        intercept = y.mean() - slope * x.mean()
        residual = y - (intercept + slope * x)
        se = np.sqrt(np.sum(residual**2) / (n - 2) / sxx)
        r2 = sxy**2 / (sxx * np.sum((y - y.mean()) ** 2))
        p = 2.0 * stats.t.sf(abs(slope / se), n - 2)

        fit = linregress(x, y)
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.intercept == pytest.approx(intercept, abs=1e-9)
        assert fit.r_squared == pytest.approx(r2, abs=1e-9)
        assert fit.std_error == pytest.approx(se, abs=1e-9)
        assert fit.p_value == pytest.approx(p, abs=1e-9)

    def test_too_few_points(self):
        with pytest.raises(DegenerateRegressionError):
            linregress([0, 1], [0, 1])

    def test_constant_x(self):
        with pytest.raises(DegenerateRegressionError):
            linregress([1, 1, 1], [0, 1, 2])


class TestEvaluate:
    def test_perfect_predictor(self, train_set):
        report = evaluate(_PerfectPredictor(train_set), train_set, "train")
        assert report.epsilon == 0.0
        assert all(v == 0.0 for v in report.mape.values())
        assert all(r.slope == pytest.approx(1.0) for r in report.regression.values())

    def test_constant_predictor(self, train_set):
        report = evaluate(_ConstantPredictor(), train_set, "train")
        expected = np.mean(np.abs(train_set.labels() - 0.2))
        assert report.epsilon == pytest.approx(expected, abs=1e-12)
        assert all(r is None or r.slope == pytest.approx(0.0, abs=1e-12) for r in report.regression.values())

    def test_reduced_report(self, train_set):
        report = evaluate(_ConstantPredictor(), train_set, "train", keep=["NAA", "GABA", "GLX"], merge_glx=True)
        assert report.labels == ["NAA", "GABA", "GLX"]
        assert report.reduction == ["NAA", "GABA", "GLX"]

    def test_report_file_round_trip(self, train_set, tmp_path):
        report = evaluate(_ConstantPredictor(), train_set, "train")
        path = save_report(report, tmp_path / "constant__train.report.json")
        assert load_report(path) == report

    def test_empty_dataset(self, train_set):
        empty = Dataset(samples=[], basis_tag="none", seed=0)
        with pytest.raises(ShapeError):
            evaluate(_ConstantPredictor(), empty)

    def test_build_report_keeps_both_sigmas(self):
        rec = _record([[1.0, 0.0], [0.0, 1.0]], [[0.9, 0.1], [0.2, 0.8]], ("A", "B"))
        report = build_report(rec, "p", "d")
        assert report.sigma != report.sigma_conventional
