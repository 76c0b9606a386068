import numpy as np
import pytest

from src.application.basis_service import render_fids
from src.application.signal_processing import (
    difference_spectrum,
    extract_component,
    fft_to_spectrum,
    ppm_to_hz,
    resample_to_window,
    spectrum_to_time,
    zoom_transform,
)
from src.core.exceptions import AxisMismatchError, InvalidSignalError, WindowOutOfRangeError
from src.domain.models import AcquisitionKind, ComponentKind, MetaboliteModel, PpmWindow
from src.domain.spectra import Spectrum, TimeSignal

OFF = AcquisitionKind.EDIT_OFF
ON = AcquisitionKind.EDIT_ON


def _singlet(ppm: float) -> MetaboliteModel:
    return MetaboliteModel.model_validate(
        {"name": "S", "lines": [{"ppm": ppm, "amplitude": 1.0}]}
    )


class TestFourierTransform:
    def test_unit_impulse_is_flat(self):
        samples = np.zeros(8, dtype=complex)
        samples[0] = 1.0
        s = fft_to_spectrum(TimeSignal(samples=samples, bandwidth_hz=8.0), OFF)
        np.testing.assert_allclose(s.values, np.ones(8), atol=1e-12)

    def test_pure_exponential_hits_one_bin(self):
        n, k0 = 16, 3
        samples = np.exp(2j * np.pi * k0 * np.arange(n) / n)
        s = fft_to_spectrum(TimeSignal(samples=samples, bandwidth_hz=16.0), OFF)
        magnitude = np.abs(s.values)
        assert np.count_nonzero(magnitude > 1e-9) == 1
        assert magnitude.max() == pytest.approx(n)

    @pytest.mark.parametrize("n", [1024, 3000, 2**14])
    def test_round_trip(self, rng, n):
        samples = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        s = fft_to_spectrum(TimeSignal(samples=samples, bandwidth_hz=2000.0), OFF)
        assert np.max(np.abs(spectrum_to_time(s) - samples)) < 1e-10

    @pytest.mark.parametrize("n", [64, 2048, 2**14])
    def test_parseval(self, rng, n):
        samples = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        s = fft_to_spectrum(TimeSignal(samples=samples, bandwidth_hz=2000.0), OFF)
        energy = np.sum(np.abs(samples) ** 2)
        assert np.sum(np.abs(s.values) ** 2) / n == pytest.approx(energy, rel=1e-9)

    def test_ppm_axis_descends(self):
        t = TimeSignal(samples=np.ones(64), bandwidth_hz=1000.0)
        axis = fft_to_spectrum(t, OFF).ppm_axis
        assert np.all(np.diff(axis) < 0.0)

    def test_single_sample_is_rejected(self):
        with pytest.raises(InvalidSignalError):
            fft_to_spectrum(TimeSignal(samples=[1.0 + 0j], bandwidth_hz=10.0), OFF)

    def test_empty_signal_is_rejected(self):
        with pytest.raises(InvalidSignalError):
            TimeSignal(samples=[], bandwidth_hz=10.0)


class TestPpmConversion:
    @pytest.mark.parametrize("ppm,hz", [(1.0, 127.0), (0.0, 0.0), (2.0, 254.0)])
    def test_ppm_to_hz(self, ppm, hz):
        assert ppm_to_hz(ppm, 127.0) == pytest.approx(hz)

    def test_default_window_bin_width(self):
        assert PpmWindow().bin_width == pytest.approx(3.0 / 2048)
        assert PpmWindow().bin_width < 0.0015


class TestResampleToWindow:
    def test_bandwidths_share_the_window_grid(self):
        window = PpmWindow()
        peaks = []
        for bandwidth in (1250.0, 2000.0):
            samples = int(bandwidth)
            fid = render_fids(_singlet(3.0), 1.0, samples, bandwidth, 127.0, 4.7)[OFF]
            t = TimeSignal(samples=fid, bandwidth_hz=bandwidth)
            s = resample_to_window(fft_to_spectrum(t, OFF), window, t)
            assert s.values.size == 2048
            np.testing.assert_allclose(s.ppm_axis, window.axis(), atol=window.bin_width)
            peaks.append(int(np.argmax(np.abs(s.values))))
        assert abs(peaks[0] - peaks[1]) <= 1
        assert window.axis()[peaks[0]] == pytest.approx(3.0, abs=2 * window.bin_width)

    def test_spectrum_on_grid_is_unchanged(self, rng):
        window = PpmWindow(bins=256)
        values = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        s = Spectrum(values=values, ppm_axis=window.axis(), acquisition=OFF)
        out = resample_to_window(s, window)
        np.testing.assert_allclose(out.values, values, atol=1e-12)

    def test_window_outside_bandwidth(self):
        t = TimeSignal(samples=np.ones(64), bandwidth_hz=200.0)
        with pytest.raises(WindowOutOfRangeError):
            resample_to_window(fft_to_spectrum(t, OFF), PpmWindow(), t)

    def test_zoom_outside_bandwidth(self):
        with pytest.raises(WindowOutOfRangeError):
            zoom_transform(np.ones(64), 200.0, 127.0, 4.7, PpmWindow())

    def test_off_grid_spectrum_needs_time_signal(self):
        t = TimeSignal(samples=np.ones(4096), bandwidth_hz=2000.0)
        with pytest.raises(InvalidSignalError):
            resample_to_window(fft_to_spectrum(t, OFF), PpmWindow())


class TestDifferenceSpectrum:
    def _spectrum(self, values, acquisition, window=PpmWindow(bins=4)):
        return Spectrum(values=values, ppm_axis=window.axis(), acquisition=acquisition)

    def test_identical_spectra_cancel(self):
        values = np.array([0.0, 1.0, 3.0, 1.0], dtype=complex)
        d = difference_spectrum(self._spectrum(values, ON), self._spectrum(values, OFF))
        np.testing.assert_array_equal(d.values, np.zeros(4))
        assert d.acquisition == AcquisitionKind.DIFFERENCE

    def test_inverted_peak_doubles(self):
        off = self._spectrum([0.0, -1.0, 0.0, 0.0], OFF)
        on = self._spectrum([0.0, 1.0, 0.0, 0.0], ON)
        assert difference_spectrum(on, off).values[1] == pytest.approx(2.0)

    def test_difference_plus_off_is_on(self, rng):
        on = self._spectrum(rng.standard_normal(4), ON)
        off = self._spectrum(rng.standard_normal(4), OFF)
        d = difference_spectrum(on, off)
        np.testing.assert_allclose(d.values + off.values, on.values, rtol=0, atol=1e-12)

    def test_mismatched_axes(self):
        on = self._spectrum(np.ones(4), ON)
        off = self._spectrum(np.ones(4), OFF, PpmWindow(high_ppm=4.0, low_ppm=2.0, bins=4))
        with pytest.raises(AxisMismatchError):
            difference_spectrum(on, off)


class TestExtractComponent:
    @pytest.mark.parametrize(
        "kind,expected",
        [(ComponentKind.MAGNITUDE, 5.0), (ComponentKind.REAL, 3.0), (ComponentKind.IMAGINARY, 4.0)],
    )
    def test_components_of_3_4i(self, kind, expected):
        s = Spectrum(values=[3 + 4j], ppm_axis=[3.0], acquisition=OFF)
        assert extract_component(s, kind)[0] == pytest.approx(expected)
