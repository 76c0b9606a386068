import json

import numpy as np
import pytest

from src.application.basis_service import build_basis, load_definitions, synthesize_metabolite
from src.core.exceptions import (
    DuplicateMetaboliteError,
    EmptyModelError,
    InvalidDefinitionError,
    InvalidLinewidthError,
)
from src.domain.models import AcquisitionKind, MetaboliteModel, PpmWindow

OFF = AcquisitionKind.EDIT_OFF
ON = AcquisitionKind.EDIT_ON
DIFF = AcquisitionKind.DIFFERENCE


def _model(name, lines):
    return MetaboliteModel.model_validate({"name": name, "lines": lines})


class TestSynthesizeMetabolite:
    def test_suppressed_line_is_absent_from_edit_on(self, window):
        naa = _model("NAA", [{"ppm": 2.0, "amplitude": 1.0, "on_sign": 0, "off_sign": 1}])
        spectra = synthesize_metabolite(naa, 1.0, window, samples=4096)
        axis = spectra[OFF].ppm_axis
        peak = int(np.argmax(np.abs(spectra[OFF].values)))
        assert axis[peak] == pytest.approx(2.0, abs=2 * window.bin_width)
        assert np.max(np.abs(spectra[ON].values)) < 1e-12

    def test_unedited_singlet_cancels_in_difference(self, window):
        cr = _model("Cr", [{"ppm": 3.0, "amplitude": 1.0}])
        spectra = synthesize_metabolite(cr, 1.0, window, samples=4096)
        assert np.max(np.abs(spectra[DIFF].values)) < 1e-12

    def test_normalised_edit_off_peak(self, window):
        gaba = _model(
            "GABA",
            [
                {"ppm": 2.98, "amplitude": 0.5, "on_sign": 1, "off_sign": -1},
                {"ppm": 3.01, "amplitude": 1.0},
            ],
        )
        spectra = synthesize_metabolite(gaba, 1.0, window, samples=4096)
        assert np.max(np.abs(spectra[OFF].values)) == pytest.approx(1.0)

    def test_absorption_fwhm_matches_linewidth(self):
        fine = PpmWindow(high_ppm=3.1, low_ppm=2.9, bins=2048)
        singlet = _model("S", [{"ppm": 3.0, "amplitude": 1.0}])
        spectra = synthesize_metabolite(
            singlet, 1.0, fine, samples=16384, bandwidth_hz=2000.0, normalize=False
        )
        real = spectra[OFF].values.real
        above = np.count_nonzero(real >= real.max() / 2.0)
        bin_hz = fine.bin_width * 127.0
        assert 0.9 <= above * bin_hz <= 1.1

    def test_peak_height_falls_with_linewidth(self, window):
        singlet = _model("S", [{"ppm": 3.0, "amplitude": 1.0}])
        heights = [
            np.max(
                np.abs(
                    synthesize_metabolite(
                        singlet, lw, window, samples=4096, normalize=False
                    )[OFF].values
                )
            )
            for lw in (0.75, 1.0, 1.25)
        ]
        assert heights[0] > heights[1] > heights[2]

    def test_non_positive_linewidth(self, window):
        singlet = _model("S", [{"ppm": 3.0, "amplitude": 1.0}])
        with pytest.raises(InvalidLinewidthError):
            synthesize_metabolite(singlet, 0.0, window)

    def test_zero_amplitude_model(self, window):
        empty = _model("Z", [{"ppm": 3.0, "amplitude": 0.0}])
        with pytest.raises(EmptyModelError):
            synthesize_metabolite(empty, 1.0, window, samples=4096)


class TestBuildBasis:
    def test_one_set_per_linewidth(self, models, window):
        bases = build_basis(models, [1.0], window, samples=4096)
        assert len(bases) == 1
        assert len(bases[0].entries) == 5
        assert all(len(spectra) == 3 for spectra in bases[0].entries.values())

    def test_linewidths_share_one_axis(self, models, window):
        bases = build_basis(models, [0.75, 1.0, 1.25], window, samples=4096)
        assert [b.linewidth_hz for b in bases] == [0.75, 1.0, 1.25]
        for b in bases[1:]:
            np.testing.assert_array_equal(b.ppm_axis, bases[0].ppm_axis)

    def test_tag_names_linewidth(self, basis):
        assert basis.tag == "parametric-v1@1Hz"

    def test_empty_linewidths(self, models, window):
        with pytest.raises(InvalidLinewidthError):
            build_basis(models, [], window)

    def test_duplicate_names(self, models, window):
        with pytest.raises(DuplicateMetaboliteError):
            build_basis([models[0], models[0]], [1.0], window, samples=4096)

    def test_basis_keeps_fids_for_noise(self, basis):
        assert basis.synthesis is not None
        assert basis.fids["NAA"][OFF].size == basis.synthesis.samples


class TestLoadDefinitions:
    def test_bundled_definitions(self, models):
        assert [m.name for m in models] == ["NAA", "Cr", "GABA", "Glu", "Gln"]

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "defs.json"
        path.write_text('{\n  "metabolites": [\n    {"name": "NAA",,}\n  ]\n}\n')
        with pytest.raises(InvalidDefinitionError, match="line 3"):
            load_definitions(path)

    def test_invalid_field_reports_location(self, tmp_path):
        path = tmp_path / "defs.json"
        path.write_text(json.dumps({"metabolites": [{"name": "X", "lines": [{"ppm": 2.0}]}]}))
        with pytest.raises(InvalidDefinitionError, match="metabolites.0.lines.0"):
            load_definitions(path)

    def test_duplicate_definition(self, tmp_path):
        line = {"ppm": 2.0, "amplitude": 1.0}
        path = tmp_path / "defs.json"
        path.write_text(
            json.dumps({"metabolites": [{"name": "A", "lines": [line]}, {"name": "A", "lines": [line]}]})
        )
        with pytest.raises(DuplicateMetaboliteError):
            load_definitions(path)
