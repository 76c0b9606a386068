"""
Spectral transforms: time <-> frequency conversion, ppm axes, window
resampling, difference spectra and component extraction.

The ppm axis runs high to low with increasing frequency offset:
ppm = carrier_ppm - f_hz / reference_frequency_mhz.
"""

from typing import Optional

import numpy as np
from numpy import fft as npfft
from scipy import signal as spsignal

from src.config.logger_config import log
from src.core.exceptions import (
    AxisMismatchError,
    InvalidSignalError,
    WindowOutOfRangeError,
)
from src.domain.models import AcquisitionKind, ComponentKind, PpmWindow
from src.domain.spectra import Spectrum, TimeSignal


def ppm_to_hz(shift_ppm: float, reference_frequency_mhz: float) -> float:
    """Chemical shift in ppm to a frequency offset in Hz (1 ppm = 127 Hz at 127 MHz)."""
    return shift_ppm * reference_frequency_mhz


def line_frequency_hz(
    shift_ppm: float, reference_frequency_mhz: float, carrier_ppm: float
) -> float:
    """Frequency offset from the carrier at which a line at `shift_ppm` resonates."""
    return ppm_to_hz(carrier_ppm - shift_ppm, reference_frequency_mhz)


def frequency_axis_hz(samples: int, bandwidth_hz: float) -> np.ndarray:
    return npfft.fftshift(npfft.fftfreq(samples, d=1.0 / bandwidth_hz))


def ppm_axis_for(t: TimeSignal) -> np.ndarray:
    freqs = frequency_axis_hz(t.samples.size, t.bandwidth_hz)
    return t.carrier_ppm - freqs / t.reference_frequency_mhz


def fft_to_spectrum(t: TimeSignal, acquisition: AcquisitionKind) -> Spectrum:
    """
    Fourier transform a time-domain signal to a spectrum on its ppm axis.

    Args:
        t: Complex time-domain signal.
        acquisition: Acquisition tag carried by the spectrum.
    Returns:
        Spectrum of the same length as the input, ppm axis descending.
    Raises:
        InvalidSignalError: If the signal has fewer than two samples.
    """
    if t.samples.size < 2:
        raise InvalidSignalError(
            f"Need at least 2 samples to transform, got {t.samples.size}"
        )
    values = npfft.fftshift(npfft.fft(t.samples))
    return Spectrum(values=values, ppm_axis=ppm_axis_for(t), acquisition=acquisition)


def spectrum_to_time(s: Spectrum) -> np.ndarray:
    """Inverse of fft_to_spectrum for full-bandwidth spectra."""
    return npfft.ifft(npfft.ifftshift(s.values))


def _window_frequencies(
    window: PpmWindow, reference_frequency_mhz: float, carrier_ppm: float
) -> tuple[float, float]:
    first_hz = line_frequency_hz(window.high_ppm, reference_frequency_mhz, carrier_ppm)
    step_hz = ppm_to_hz(window.bin_width, reference_frequency_mhz)
    return first_hz, step_hz


def zoom_transform(
    samples: np.ndarray,
    bandwidth_hz: float,
    reference_frequency_mhz: float,
    carrier_ppm: float,
    window: PpmWindow,
) -> np.ndarray:
    """
    Spectrum of the infinitely zero-filled signal sampled on the window grid.

    Zero-filling only interpolates the discrete-time Fourier transform, so
    evaluating that transform directly on the window bins (chirp-z) gives the
    zero-filled spectrum trimmed to [high_ppm, low_ppm) for any bandwidth.
    """
    first_hz, step_hz = _window_frequencies(window, reference_frequency_mhz, carrier_ppm)
    last_hz = first_hz + step_hz * (window.bins - 1)
    nyquist = bandwidth_hz / 2.0
    if first_hz < -nyquist or last_hz >= nyquist:
        raise WindowOutOfRangeError(
            f"Window [{window.high_ppm}, {window.low_ppm}] ppm spans "
            f"{first_hz:.1f}..{last_hz:.1f} Hz, outside +-{nyquist:.1f} Hz"
        )
    a = np.exp(2j * np.pi * first_hz / bandwidth_hz)
    w = np.exp(-2j * np.pi * step_hz / bandwidth_hz)
    return spsignal.czt(np.asarray(samples, dtype=np.complex128), m=window.bins, w=w, a=a)


def on_window_grid(s: Spectrum, w: PpmWindow) -> bool:
    if s.values.size != w.bins:
        return False
    return bool(np.allclose(s.ppm_axis, w.axis(), rtol=0.0, atol=1e-6 * w.bin_width))


def resample_to_window(
    s: Spectrum, w: PpmWindow, original_time: Optional[TimeSignal] = None
) -> Spectrum:
    """
    Resample a spectrum onto exactly `w.bins` bins covering [high_ppm, low_ppm).

    A spectrum already on the window grid is returned unchanged; otherwise the
    time-domain signal it came from is zero-filled onto the grid.

    Raises:
        WindowOutOfRangeError: If the window is outside the acquired bandwidth.
        InvalidSignalError: If resampling is needed but no time signal is given.
    """
    if on_window_grid(s, w):
        return s
    if original_time is None:
        raise InvalidSignalError(
            "Resampling a spectrum off the window grid needs its time-domain signal"
        )
    if original_time.samples.size != s.values.size:
        raise AxisMismatchError(
            f"Time signal has {original_time.samples.size} samples, "
            f"spectrum has {s.values.size} bins"
        )
    if s.ppm_axis[0] < w.high_ppm or s.ppm_axis[-1] > w.low_ppm:
        raise WindowOutOfRangeError(
            f"Spectrum covers [{s.ppm_axis[0]:.3f}, {s.ppm_axis[-1]:.3f}] ppm, "
            f"window needs [{w.high_ppm}, {w.low_ppm}]"
        )
    values = zoom_transform(
        original_time.samples,
        original_time.bandwidth_hz,
        original_time.reference_frequency_mhz,
        original_time.carrier_ppm,
        w,
    )
    log.debug(
        "Spectrum resampled to window",
        source_bins=s.values.size,
        bins=w.bins,
        bandwidth_hz=original_time.bandwidth_hz,
    )
    return Spectrum(values=values, ppm_axis=w.axis(), acquisition=s.acquisition)


def difference_spectrum(on: Spectrum, off: Spectrum) -> Spectrum:
    """Edit-on minus edit-off; both must share one ppm axis."""
    if on.values.size != off.values.size or not np.array_equal(
        on.ppm_axis, off.ppm_axis
    ):
        raise AxisMismatchError("Edit-on and edit-off spectra do not share a ppm axis")
    return Spectrum(
        values=on.values - off.values,
        ppm_axis=on.ppm_axis,
        acquisition=AcquisitionKind.DIFFERENCE,
    )


def extract_component(s: Spectrum, kind: ComponentKind) -> np.ndarray:
    if kind == ComponentKind.REAL:
        return s.values.real.copy()
    if kind == ComponentKind.IMAGINARY:
        return s.values.imag.copy()
    return np.abs(s.values)
