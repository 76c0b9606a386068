"""
Pre-processing chain and network input assembly.

Scans (samples carrying time-domain acquisitions) run the full chain:
Butterworth (time domain) -> FFT -> resample_to_window -> B0 correction.
Synthetic samples already sit on the reference-aligned window grid. Both then
go through component extraction and per-row normalisation.
"""

from typing import Dict, Optional

import numpy as np
from scipy import signal as spsignal

from src.application.signal_processing import (
    difference_spectrum,
    extract_component,
    fft_to_spectrum,
    ppm_to_hz,
    resample_to_window,
)
from src.config.config import config
from src.config.logger_config import log
from src.core.exceptions import (
    InvalidCutoffError,
    InvalidSignalError,
    MissingAcquisitionError,
    PeakNotFoundError,
)
from src.domain.models import AcquisitionKind, InputConfig, PpmWindow
from src.domain.spectra import InputTensor, Sample, Spectrum, TimeSignal
from shared.libs.observability.metrics import B0_CORRECTIONS_SKIPPED

SpectrumMap = Dict[AcquisitionKind, Spectrum]


def butterworth_filter(t: TimeSignal, cutoff_fraction: float) -> TimeSignal:
    """
    First-order low-pass Butterworth, run forward and backward (zero phase)
    over the real and imaginary channels separately.

    Args:
        t: Time-domain signal.
        cutoff_fraction: Cutoff as a fraction of Nyquist, strictly inside (0, 1).
    Raises:
        InvalidCutoffError: If the cutoff is outside (0, 1).
    """
    if not 0.0 < cutoff_fraction < 1.0:
        raise InvalidCutoffError(
            f"Cutoff must be a fraction of Nyquist in (0, 1), got {cutoff_fraction}"
        )
    b, a = spsignal.butter(1, cutoff_fraction, btype="lowpass")
    padlen = 3 * max(len(a), len(b))
    if t.samples.size <= padlen:
        raise InvalidSignalError(
            f"Filtering needs more than {padlen} samples, got {t.samples.size}"
        )
    real = spsignal.filtfilt(b, a, t.samples.real)
    imag = spsignal.filtfilt(b, a, t.samples.imag)
    return t.with_samples(real + 1j * imag)


def passband_cutoff(
    t: TimeSignal,
    window: PpmWindow,
    passband_loss: Optional[float] = None,
    max_cutoff: Optional[float] = None,
) -> float:
    """
    Lowest cutoff (fraction of Nyquist) at which the zero-phase first-order
    filter loses at most `passband_loss` of amplitude anywhere in `window`.
    Capped at `max_cutoff` when the window reaches too close to Nyquist.
    """
    loss = config.BUTTERWORTH_PASSBAND_LOSS if passband_loss is None else passband_loss
    cap = config.BUTTERWORTH_MAX_CUTOFF if max_cutoff is None else max_cutoff
    edge_hz = max(
        abs(ppm_to_hz(t.carrier_ppm - ppm, t.reference_frequency_mhz))
        for ppm in (window.high_ppm, window.low_ppm)
    )
    edge = min(edge_hz / (t.bandwidth_hz / 2.0), 1.0)
    # forward-backward gain is 1 / (1 + (w / wc)^2), w = tan(pi * f / 2)
    warped = np.tan(np.pi * edge / 2.0) * np.sqrt((1.0 - loss) / loss)
    return float(min(cap, 2.0 / np.pi * np.arctan(warped)))


def b0_shift_bins(
    spectra: SpectrumMap,
    reference_ppm: Optional[float] = None,
    half_width_ppm: Optional[float] = None,
    peak_factor: Optional[float] = None,
) -> int:
    """
    Integer bin shift that moves the edit-off magnitude maximum inside
    reference_ppm +- half_width_ppm onto the reference bin.

    Raises:
        MissingAcquisitionError: If there is no edit-off spectrum.
        PeakNotFoundError: If the maximum does not exceed peak_factor times the
            median magnitude of the search window.
    """
    b0 = config.b0
    reference_ppm = b0.REFERENCE_PPM if reference_ppm is None else reference_ppm
    half_width_ppm = b0.SEARCH_HALF_WIDTH_PPM if half_width_ppm is None else half_width_ppm
    peak_factor = b0.PEAK_FACTOR if peak_factor is None else peak_factor

    off = spectra.get(AcquisitionKind.EDIT_OFF)
    if off is None:
        raise MissingAcquisitionError("B0 correction needs the edit-off spectrum")

    axis = off.ppm_axis
    in_window = np.flatnonzero(np.abs(axis - reference_ppm) <= half_width_ppm)
    if in_window.size == 0:
        raise PeakNotFoundError(
            f"Search window {reference_ppm} +- {half_width_ppm} ppm is outside the spectrum"
        )
    magnitudes = np.abs(off.values[in_window])
    peak_bin = int(in_window[np.argmax(magnitudes)])
    peak = float(magnitudes.max())
    median = float(np.median(magnitudes))
    if peak <= peak_factor * median:
        raise PeakNotFoundError(
            f"No peak above {peak_factor:g}x the median magnitude near {reference_ppm} ppm"
        )
    reference_bin = int(np.argmin(np.abs(axis - reference_ppm)))
    return reference_bin - peak_bin


def b0_correct(
    spectra: SpectrumMap,
    reference_ppm: Optional[float] = None,
    half_width_ppm: Optional[float] = None,
    peak_factor: Optional[float] = None,
) -> SpectrumMap:
    """Circularly shift every acquisition so the edit-off reference peak sits on the reference bin."""
    shift = b0_shift_bins(spectra, reference_ppm, half_width_ppm, peak_factor)
    if shift == 0:
        return dict(spectra)
    return {acq: s.with_values(np.roll(s.values, shift)) for acq, s in spectra.items()}


def normalize(rows: np.ndarray) -> np.ndarray:
    """Mean-centre each row, then scale it so its largest absolute value is 1."""
    rows = np.array(rows, dtype=np.float64, copy=True)
    if rows.ndim == 1:
        rows = rows[None, :]
    centred = rows - rows.mean(axis=1, keepdims=True)
    peak = np.abs(centred).max(axis=1, keepdims=True)
    safe = np.where(peak > 0.0, peak, 1.0)
    return np.where(peak > 0.0, centred / safe, rows)


def _available(spectra: SpectrumMap, acq: AcquisitionKind) -> bool:
    if acq in spectra:
        return True
    return acq == AcquisitionKind.DIFFERENCE and (
        AcquisitionKind.EDIT_ON in spectra and AcquisitionKind.EDIT_OFF in spectra
    )


def _scan_spectra(sample: Sample, cfg: InputConfig) -> SpectrumMap:
    spectra: SpectrumMap = {}
    for acq, signal in sample.time_signals.items():
        if cfg.butterworth:
            cutoff = cfg.butterworth_cutoff
            if cutoff is None:
                cutoff = passband_cutoff(signal, cfg.window)
            signal = butterworth_filter(signal, cutoff)
        spectra[acq] = resample_to_window(fft_to_spectrum(signal, acq), cfg.window, signal)

    if cfg.b0_correct:
        try:
            spectra = b0_correct(spectra)
        except (PeakNotFoundError, MissingAcquisitionError) as e:
            log.warning("B0 correction skipped", reason=e.message)
            B0_CORRECTIONS_SKIPPED.inc()
    return spectra


def window_spectra(sample: Sample, cfg: InputConfig) -> SpectrumMap:
    """
    Spectra of every configured acquisition on the InputConfig window.

    Raises:
        MissingAcquisitionError: If the sample lacks a configured acquisition.
    """
    if sample.time_signals:
        spectra = _scan_spectra(sample, cfg)
    else:
        spectra = {
            acq: resample_to_window(s, cfg.window) for acq, s in sample.spectra.items()
        }

    missing = [acq.value for acq in cfg.acquisitions if not _available(spectra, acq)]
    if missing:
        raise MissingAcquisitionError(
            f"Sample lacks acquisitions {missing} required by the input config"
        )

    if (
        AcquisitionKind.DIFFERENCE in cfg.acquisitions
        and AcquisitionKind.DIFFERENCE not in spectra
    ):
        spectra[AcquisitionKind.DIFFERENCE] = difference_spectrum(
            spectra[AcquisitionKind.EDIT_ON], spectra[AcquisitionKind.EDIT_OFF]
        )
    return spectra


def component_rows(spectra: SpectrumMap, cfg: InputConfig) -> np.ndarray:
    """rows x bins matrix, acquisitions-major and components-minor."""
    return np.stack(
        [
            extract_component(spectra[acq], component)
            for acq in cfg.acquisitions
            for component in cfg.components
        ]
    )


def assemble_input(
    sample: Sample, cfg: InputConfig, normalize_rows: bool = True
) -> InputTensor:
    """
    Build the network input of one sample.

    Args:
        sample: Synthetic sample or scan.
        cfg: Acquisitions, components and window of the input rows.
        normalize_rows: Mean-centre and max-abs scale each row.
    Raises:
        MissingAcquisitionError: If a configured acquisition is unavailable.
    """
    rows = component_rows(window_spectra(sample, cfg), cfg)
    if normalize_rows:
        rows = normalize(rows)
    return InputTensor(data=rows)
