"""
Parametric basis synthesis: Lorentzian line models rendered per MEGA-PRESS
acquisition, normalised to a unit edit-off peak, one BasisSet per linewidth.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src.application.signal_processing import (
    difference_spectrum,
    fft_to_spectrum,
    line_frequency_hz,
    resample_to_window,
)
from src.config.config import config
from src.config.logger_config import log
from src.core.exceptions import (
    DuplicateMetaboliteError,
    EmptyModelError,
    InvalidDefinitionError,
    InvalidLinewidthError,
    InvalidSignalError,
)
from src.domain.models import (
    AcquisitionKind,
    BasisDefinition,
    MetaboliteModel,
    PpmWindow,
)
from src.domain.spectra import BasisSet, Spectrum, SynthesisParameters, TimeSignal

DEFAULT_DEFINITIONS_PATH = (
    Path(__file__).resolve().parent.parent / "domain" / "data" / "basis_definitions.json"
)
MIN_SYNTH_SAMPLES = 512

ACQUIRED = (AcquisitionKind.EDIT_OFF, AcquisitionKind.EDIT_ON)

RenderedFids = Dict[AcquisitionKind, np.ndarray]


def load_definitions(path: Optional[Path] = None) -> List[MetaboliteModel]:
    """
    Parse a basis definition file.

    Args:
        path: JSON file with `{"metabolites": [{name, lines: [...]}, ...]}`;
            the bundled definitions when omitted.
    Raises:
        InvalidDefinitionError: On malformed JSON (with its line number) or a
            field that fails validation (with its location).
        DuplicateMetaboliteError: If a name occurs twice.
    """
    path = Path(path) if path is not None else DEFAULT_DEFINITIONS_PATH
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidDefinitionError(f"Cannot read basis definitions {path}: {e}") from e

    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidDefinitionError(
            f"{path}: line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e

    try:
        definition = BasisDefinition.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise InvalidDefinitionError(f"{path}: field '{field}': {first['msg']}") from e

    models = list(definition.metabolites)
    _check_unique(models)
    log.debug("Basis definitions loaded", path=str(path), metabolites=len(models))
    return models


def _check_unique(models: Sequence[MetaboliteModel]) -> None:
    seen = set()
    for model in models:
        if model.name in seen:
            raise DuplicateMetaboliteError(f"Metabolite '{model.name}' is defined twice")
        seen.add(model.name)


def render_fids(
    model: MetaboliteModel,
    linewidth_hz: float,
    samples: int,
    bandwidth_hz: float,
    reference_frequency_mhz: float,
    carrier_ppm: float,
) -> RenderedFids:
    """Edit-off and edit-on free-induction decays of one line model, unnormalised."""
    t = np.arange(samples, dtype=np.float64) / bandwidth_hz
    decay = np.exp(-np.pi * linewidth_hz * t)
    freqs = np.array(
        [
            line_frequency_hz(line.center_ppm, reference_frequency_mhz, carrier_ppm)
            for line in model.lines
        ]
    )
    oscillations = np.exp(2j * np.pi * freqs[:, None] * t[None, :])

    fids: RenderedFids = {}
    for acquisition in ACQUIRED:
        amplitudes = np.array(
            [line.relative_amplitude * line.sign(acquisition) for line in model.lines],
            dtype=np.float64,
        )
        fids[acquisition] = (amplitudes @ oscillations) * decay
    return fids


def _render(
    model: MetaboliteModel,
    linewidth_hz: float,
    window: PpmWindow,
    samples: int,
    bandwidth_hz: float,
    normalize: bool,
) -> Tuple[Dict[AcquisitionKind, Spectrum], RenderedFids]:
    if linewidth_hz <= 0.0:
        raise InvalidLinewidthError(f"Linewidth must be positive, got {linewidth_hz} Hz")
    if samples < MIN_SYNTH_SAMPLES:
        raise InvalidSignalError(
            f"Synthesis needs at least {MIN_SYNTH_SAMPLES} samples, got {samples}"
        )

    fids = render_fids(
        model,
        linewidth_hz,
        samples,
        bandwidth_hz,
        config.REFERENCE_FREQUENCY_MHZ,
        config.CARRIER_PPM,
    )
    spectra: Dict[AcquisitionKind, Spectrum] = {}
    for acquisition, fid in fids.items():
        signal = TimeSignal(samples=fid, bandwidth_hz=bandwidth_hz)
        spectra[acquisition] = resample_to_window(
            fft_to_spectrum(signal, acquisition), window, signal
        )

    peak = float(np.max(np.abs(spectra[AcquisitionKind.EDIT_OFF].values)))
    if peak == 0.0:
        raise EmptyModelError(f"Metabolite '{model.name}' has no edit-off signal")

    if normalize:
        scale = 1.0 / peak
        fids = {acq: fid * scale for acq, fid in fids.items()}
        spectra = {
            acq: s.with_values(s.values * scale) for acq, s in spectra.items()
        }

    spectra[AcquisitionKind.DIFFERENCE] = difference_spectrum(
        spectra[AcquisitionKind.EDIT_ON], spectra[AcquisitionKind.EDIT_OFF]
    )
    return spectra, fids


def synthesize_metabolite(
    model: MetaboliteModel,
    linewidth_hz: float,
    window: PpmWindow,
    samples: Optional[int] = None,
    bandwidth_hz: Optional[float] = None,
    normalize: bool = True,
) -> Dict[AcquisitionKind, Spectrum]:
    """
    Render one metabolite's edit-off, edit-on and difference spectra.

    Lines become complex exponentials scaled by amplitude and acquisition sign,
    apodised by exp(-pi * linewidth * t) (Lorentzian, FWHM = linewidth), then
    transformed and resampled onto `window`. With `normalize` the edit-off
    magnitude peak is scaled to 1.

    Raises:
        InvalidLinewidthError: If linewidth_hz <= 0.
        EmptyModelError: If the edit-off spectrum is zero.
    """
    spectra, _ = _render(
        model,
        linewidth_hz,
        window,
        samples or config.SYNTH_SAMPLES,
        bandwidth_hz or config.SYNTH_BANDWIDTH_HZ,
        normalize,
    )
    return spectra


def build_basis(
    models: Sequence[MetaboliteModel],
    linewidths_hz: Sequence[float],
    window: PpmWindow,
    samples: Optional[int] = None,
    bandwidth_hz: Optional[float] = None,
    source_tag: str = "parametric-v1",
) -> List[BasisSet]:
    """
    Build one normalised BasisSet per linewidth.

    Raises:
        InvalidLinewidthError: If no linewidth is given or any is <= 0.
        DuplicateMetaboliteError: If two models share a name.
    """
    if not linewidths_hz:
        raise InvalidLinewidthError("At least one linewidth is required")
    if not models:
        raise EmptyModelError("At least one metabolite model is required")
    _check_unique(models)

    samples = samples or config.SYNTH_SAMPLES
    bandwidth_hz = bandwidth_hz or config.SYNTH_BANDWIDTH_HZ
    synthesis = SynthesisParameters(
        samples=samples,
        bandwidth_hz=bandwidth_hz,
        reference_frequency_mhz=config.REFERENCE_FREQUENCY_MHZ,
        carrier_ppm=config.CARRIER_PPM,
    )

    bases: List[BasisSet] = []
    for linewidth in linewidths_hz:
        entries = {}
        fids = {}
        for model in models:
            entries[model.name], fids[model.name] = _render(
                model, linewidth, window, samples, bandwidth_hz, normalize=True
            )
        basis = BasisSet(
            entries=entries,
            linewidth_hz=linewidth,
            window=window,
            source_tag=source_tag,
            fids=fids,
            synthesis=synthesis,
        )
        log.info(
            "Basis set built",
            tag=basis.tag,
            metabolites=len(entries),
            bins=window.bins,
        )
        bases.append(basis)
    return bases
