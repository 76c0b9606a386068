import numpy as np
import pytest
from scipy.optimize import nnls as scipy_nnls

from src.application import fitting_service
from src.application.basis_service import build_basis
from src.application.dataset_service import generate_dataset, synthesize_sample
from src.application.fitting_service import (
    design_matrix,
    fit_sample,
    lawson_hanson,
    nnls_fit,
    observed_rows,
)
from src.application.quantification_service import NnlsQuantifier
from src.core.exceptions import ConvergenceError, NoBasisError, ShapeError
from src.domain.models import InputConfig

MIXTURE = {"NAA": 0.3, "Cr": 0.2, "GABA": 0.1, "Glu": 0.25, "Gln": 0.15}


@pytest.fixture(scope="module")
def real_cfg(window) -> InputConfig:
    return InputConfig.from_text("off,diff", "r", window=window, b0_correct=False)


class TestNnlsFit:
    def test_noiseless_mixture_is_recovered(self, basis, real_cfg):
        sample = synthesize_sample(basis, MIXTURE, 0.0, 0)
        fit = fit_sample(sample, basis, real_cfg)
        for name, value in MIXTURE.items():
            assert fit.concentrations[name] == pytest.approx(value, abs=1e-6)
        assert fit.residual_norm < 1e-6

    def test_zero_observation(self, basis, real_cfg):
        fit = nnls_fit(np.zeros((2, 512)), basis, real_cfg)
        assert all(v == 0.0 for v in fit.concentrations.values())
        assert fit.residual_norm == 0.0
        assert fit.iterations == 0

    def test_single_metabolite_is_an_indicator(self, basis, real_cfg):
        fit = fit_sample(synthesize_sample(basis, {"GABA": 1.0}, 0.0, 0), basis, real_cfg)
        expected = {"NAA": 0.0, "Cr": 0.0, "GABA": 1.0, "Glu": 0.0, "Gln": 0.0}
        for name, value in expected.items():
            assert fit.concentrations[name] == pytest.approx(value, abs=1e-6)

    def test_coefficients_are_not_normalised(self, basis, real_cfg):
        doubled = {name: v / 2 for name, v in MIXTURE.items()}
        sample = synthesize_sample(basis, doubled, 0.0, 0)
        fit = fit_sample(sample, basis, real_cfg)
        assert fit.coefficients["NAA"] == pytest.approx(0.15, abs=1e-6)
        assert fit.concentrations["NAA"] == pytest.approx(0.3, abs=1e-6)

    def test_scale_equivariance(self, basis, real_cfg):
        observed = observed_rows(synthesize_sample(basis, MIXTURE, 0.0, 0), real_cfg)
        fit = nnls_fit(observed, basis, real_cfg)
        scaled = nnls_fit(observed * 7.5, basis, real_cfg)
        for name in MIXTURE:
            expected = 7.5 * fit.coefficients[name]
            assert scaled.coefficients[name] == pytest.approx(expected, rel=1e-9, abs=1e-12)
            assert scaled.concentrations[name] == pytest.approx(fit.concentrations[name], abs=1e-9)

    @pytest.mark.slow
    def test_random_mixtures_fit_exactly(self, basis, real_cfg):
        a = design_matrix(basis, real_cfg)
        rng = np.random.default_rng(50)
        for weights in rng.dirichlet(np.ones(len(MIXTURE)), size=50):
            mixture = dict(zip(MIXTURE, weights))
            fit = fit_sample(synthesize_sample(basis, mixture, 0.0, 0), basis, real_cfg, design=a)
            assert fit.residual_norm < 1e-8
            for name, value in mixture.items():
                assert fit.concentrations[name] == pytest.approx(value, abs=1e-6)

    def test_design_matrix_shape_is_checked(self, basis, real_cfg):
        with pytest.raises(ShapeError):
            nnls_fit(np.zeros((2, 512)), basis, real_cfg, design=np.zeros((10, 5)))

    def test_observation_shape(self, basis, real_cfg):
        with pytest.raises(ShapeError):
            nnls_fit(np.zeros((3, 512)), basis, real_cfg)

    def test_design_matrix_columns(self, basis, real_cfg):
        a = design_matrix(basis, real_cfg)
        assert a.shape == (2 * 512, 5)


class TestLawsonHanson:
    def test_matches_reference_solver(self, rng):
        a = rng.standard_normal((40, 8))
        y = rng.standard_normal(40)
        x, _ = lawson_hanson(a, y)
        np.testing.assert_allclose(x, scipy_nnls(a, y)[0], atol=1e-8)

    def test_kkt_conditions(self, rng):
        a = rng.standard_normal((30, 6))
        y = rng.standard_normal(30)
        x, _ = lawson_hanson(a, y)
        w = a.T @ (y - a @ x)
        scale = np.linalg.norm(a) * np.linalg.norm(y)
        assert np.all(x >= 0.0)
        assert np.all(w <= 1e-9 * scale)
        assert np.all(np.abs(w[x > 0.0]) <= 1e-9 * scale)

    def test_iteration_budget(self, rng):
        a = np.abs(rng.standard_normal((20, 3))) + np.eye(20, 3)
        y = a @ np.array([1.0, 2.0, 3.0])
        with pytest.raises(ConvergenceError) as info:
            lawson_hanson(a, y, max_iterations=1)
        assert info.value.best.shape == (3,)
        assert info.value.exit_code == 3


class TestNnlsQuantifier:
    @pytest.fixture(scope="class")
    def broad_basis(self, models, window):
        return build_basis(models, [6.0], window, samples=4096, bandwidth_hz=2000.0)[0]

    def test_samples_use_their_own_basis(self, basis, broad_basis, real_cfg):
        dataset = generate_dataset([broad_basis], 4, seed=5, noisy_fraction=0.0)
        quantifier = NnlsQuantifier([basis, broad_basis], real_cfg)
        assert quantifier.basis_for(dataset.samples[0]) is broad_basis
        predicted = quantifier.quantify_many(dataset.samples)
        np.testing.assert_allclose(predicted, dataset.labels(), atol=1e-6)

    def test_untagged_samples_use_first_basis(self, basis, broad_basis, real_cfg):
        sample = synthesize_sample(basis, MIXTURE, 0.0, 0).model_copy(update={"basis_tag": ""})
        assert NnlsQuantifier([basis, broad_basis], real_cfg).basis_for(sample) is basis

    def test_design_matrices_are_built_once(self, basis, real_cfg, monkeypatch):
        quantifier = NnlsQuantifier(basis, real_cfg)

        def rebuilt(*args, **kwargs):
            raise AssertionError("design matrix rebuilt per sample")

        monkeypatch.setattr(fitting_service, "design_matrix", rebuilt)
        result = quantifier.quantify(synthesize_sample(basis, MIXTURE, 0.0, 0))
        assert result["NAA"] == pytest.approx(MIXTURE["NAA"], abs=1e-6)

    def test_needs_a_basis(self, real_cfg):
        with pytest.raises(NoBasisError):
            NnlsQuantifier([], real_cfg)
