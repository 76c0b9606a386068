"""
Spectral data containers: time-domain signals, windowed spectra, basis sets,
samples and datasets. Arrays are made read-only on construction.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config.config import config
from src.core.exceptions import AxisMismatchError, InvalidSignalError, ShapeError
from src.domain.models import (
    DEFAULT_METABOLITES,
    AcquisitionKind,
    PpmWindow,
    Split,
)

ConcentrationVector = Dict[str, float]


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class TimeSignal(BaseModel):
    """Complex free-induction decay sampled at `bandwidth_hz`."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray
    bandwidth_hz: float = Field(..., gt=0.0)
    reference_frequency_mhz: float = Field(
        default_factory=lambda: config.REFERENCE_FREQUENCY_MHZ, gt=0.0
    )
    carrier_ppm: float = Field(default_factory=lambda: config.CARRIER_PPM)

    @field_validator("samples", mode="before")
    @classmethod
    def _as_complex(cls, value) -> np.ndarray:
        array = np.asarray(value)
        if array.ndim != 1 or array.size == 0:
            raise InvalidSignalError("Time signal must be a non-empty 1-D sequence")
        return _frozen(array, np.complex128)

    @property
    def dwell_s(self) -> float:
        return 1.0 / self.bandwidth_hz

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size, dtype=np.float64) / self.bandwidth_hz

    def with_samples(self, samples: np.ndarray) -> "TimeSignal":
        return TimeSignal(
            samples=samples,
            bandwidth_hz=self.bandwidth_hz,
            reference_frequency_mhz=self.reference_frequency_mhz,
            carrier_ppm=self.carrier_ppm,
        )


class Spectrum(BaseModel):
    """Frequency-domain signal of one acquisition on a descending ppm axis."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    ppm_axis: np.ndarray
    acquisition: AcquisitionKind

    @field_validator("values", mode="before")
    @classmethod
    def _as_complex(cls, value) -> np.ndarray:
        return _frozen(np.asarray(value), np.complex128)

    @field_validator("ppm_axis", mode="before")
    @classmethod
    def _as_real(cls, value) -> np.ndarray:
        array = np.asarray(value)
        if isinstance(value, np.ndarray) and not value.flags.writeable and value.dtype == np.float64:
            # shared read-only axes are reused as-is
            return value
        return _frozen(array, np.float64)

    @model_validator(mode="after")
    def _check_axis(self) -> "Spectrum":
        if self.values.ndim != 1 or self.ppm_axis.ndim != 1:
            raise AxisMismatchError("Spectrum values and ppm axis must be 1-D")
        if self.values.size != self.ppm_axis.size:
            raise AxisMismatchError(
                f"{self.values.size} values for a ppm axis of {self.ppm_axis.size}"
            )
        if self.ppm_axis.size > 1:
            steps = np.diff(self.ppm_axis)
            if np.any(steps >= 0.0):
                raise AxisMismatchError("ppm axis must be strictly decreasing")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
                raise AxisMismatchError("ppm axis spacing is not uniform")
        return self

    def with_values(
        self, values: np.ndarray, acquisition: Optional[AcquisitionKind] = None
    ) -> "Spectrum":
        return Spectrum(
            values=values,
            ppm_axis=self.ppm_axis,
            acquisition=acquisition or self.acquisition,
        )


AcquisitionSpectra = Dict[AcquisitionKind, Spectrum]


class SynthesisParameters(BaseModel):
    """Acquisition a basis set was rendered at; needed to add time-domain noise."""

    model_config = ConfigDict(frozen=True)

    samples: int = Field(..., ge=2)
    bandwidth_hz: float = Field(..., gt=0.0)
    reference_frequency_mhz: float = Field(..., gt=0.0)
    carrier_ppm: float


class BasisSet(BaseModel):
    """Normalised reference spectra per metabolite and acquisition."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    entries: Dict[str, AcquisitionSpectra]
    linewidth_hz: float = Field(..., gt=0.0)
    window: PpmWindow
    source_tag: str = "parametric-v1"
    # edit-off / edit-on FIDs scaled like the spectra; empty for imported sets
    fids: Dict[str, Dict[AcquisitionKind, np.ndarray]] = Field(default_factory=dict)
    synthesis: Optional[SynthesisParameters] = None

    @model_validator(mode="after")
    def _check_shared_axis(self) -> "BasisSet":
        if not self.entries:
            raise ShapeError("Basis set has no entries")
        reference = self.ppm_axis
        for name, spectra in self.entries.items():
            for acquisition, spectrum in spectra.items():
                if not np.array_equal(spectrum.ppm_axis, reference):
                    raise AxisMismatchError(
                        f"{name}/{acquisition.value} does not share the basis ppm axis"
                    )
        return self

    @property
    def metabolites(self) -> List[str]:
        return list(self.entries)

    @property
    def ppm_axis(self) -> np.ndarray:
        first = next(iter(self.entries.values()))
        return next(iter(first.values())).ppm_axis

    @property
    def tag(self) -> str:
        return f"{self.source_tag}@{self.linewidth_hz:g}Hz"


class Sample(BaseModel):
    """One labelled MEGA-PRESS measurement, synthetic or scanned."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spectra: AcquisitionSpectra = Field(default_factory=dict)
    # time-domain acquisitions of scans; empty for samples built on the window grid
    time_signals: Dict[AcquisitionKind, TimeSignal] = Field(default_factory=dict)
    label: ConcentrationVector = Field(default_factory=dict)
    concentrations: ConcentrationVector = Field(default_factory=dict)
    noise_sigma: float = Field(0.0, ge=0.0)
    basis_tag: str = ""

    @model_validator(mode="after")
    def _check_content(self) -> "Sample":
        if not self.spectra and not self.time_signals:
            raise ShapeError("Sample carries neither spectra nor time signals")
        if self.label:
            total = sum(self.label.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"label sums to {total}, expected 1")
        return self

    def label_vector(self, metabolites: Tuple[str, ...]) -> np.ndarray:
        return np.array([self.label.get(m, 0.0) for m in metabolites], dtype=np.float64)


class Dataset(BaseModel):
    """Labelled samples generated from (basis, count, seed)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: List[Sample]
    basis_tag: str
    seed: int = Field(..., ge=0)
    split: Split = Split.TRAIN
    metabolites: Tuple[str, ...] = DEFAULT_METABOLITES
    window: PpmWindow = Field(default_factory=PpmWindow)

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.stack([s.label_vector(self.metabolites) for s in self.samples])


class InputTensor(BaseModel):
    """rows x bins matrix fed to the network, one spectrum component per row."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _as_matrix(cls, value) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim != 2:
            raise ShapeError(f"Input tensor must be 2-D, got shape {array.shape}")
        return _frozen(array, np.float64)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def bins(self) -> int:
        return self.data.shape[1]
