"""
Parameter records for the quantification toolkit.
Every record validates its invariants on construction and is immutable.
"""

from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config.config import config

DEFAULT_METABOLITES: Tuple[str, ...] = ("NAA", "Cr", "GABA", "Glu", "Gln")


class AcquisitionKind(str, Enum):
    EDIT_OFF = "off"
    EDIT_ON = "on"
    DIFFERENCE = "diff"


class ComponentKind(str, Enum):
    REAL = "real"
    IMAGINARY = "imaginary"
    MAGNITUDE = "magnitude"

    @classmethod
    def parse(cls, text: str) -> "ComponentKind":
        """Accept full names or the single-letter R/I/M shorthands."""
        key = text.strip().lower()
        for kind in cls:
            if key in (kind.value, kind.value[0]):
                return kind
        raise ValueError(f"Unknown component '{text}' (expected r, i or m)")


class SizeVariant(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


class ReductionVariant(str, Enum):
    STRIDED = "strided"
    POOLING = "pooling"


class Padding(str, Enum):
    VALID = "valid"
    SAME = "same"


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "val"
    TEST = "test"


def parse_acquisition(text: str) -> AcquisitionKind:
    """Parse 'off', 'on' or 'diff' (case-insensitive)."""
    key = text.strip().lower()
    aliases = {"edit-off": "off", "edit-on": "on", "difference": "diff"}
    try:
        return AcquisitionKind(aliases.get(key, key))
    except ValueError as e:
        raise ValueError(
            f"Unknown acquisition '{text}' (expected off, on or diff)"
        ) from e


class PpmWindow(BaseModel):
    """Frequency window the network sees; high edge inclusive, low edge exclusive."""

    model_config = ConfigDict(frozen=True)

    high_ppm: float = 4.5
    low_ppm: float = 1.5
    bins: int = Field(2048, gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "PpmWindow":
        if not self.high_ppm > self.low_ppm:
            raise ValueError("high_ppm must be greater than low_ppm")
        return self

    @property
    def bin_width(self) -> float:
        return (self.high_ppm - self.low_ppm) / self.bins

    def axis(self) -> np.ndarray:
        """Descending ppm grid: high_ppm, high_ppm - w, ..., low_ppm + w."""
        return self.high_ppm - np.arange(self.bins, dtype=np.float64) * self.bin_width

    def index_of(self, ppm: float) -> int:
        """Nearest bin index of a chemical shift (clamped to the window)."""
        idx = int(round((self.high_ppm - ppm) / self.bin_width))
        return min(max(idx, 0), self.bins - 1)


def default_window() -> PpmWindow:
    return PpmWindow(
        high_ppm=config.WINDOW_HIGH_PPM,
        low_ppm=config.WINDOW_LOW_PPM,
        bins=config.WINDOW_BINS,
    )


class SpectralLine(BaseModel):
    """One resonance of a metabolite and its sign in each MEGA-PRESS acquisition."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    center_ppm: float = Field(..., alias="ppm", ge=0.0, le=8.0)
    relative_amplitude: float = Field(..., alias="amplitude", ge=-1.0, le=1.0)
    edit_on_sign: Literal[-1, 0, 1] = Field(1, alias="on_sign")
    edit_off_sign: Literal[-1, 0, 1] = Field(1, alias="off_sign")

    def sign(self, acquisition: AcquisitionKind) -> int:
        if acquisition == AcquisitionKind.EDIT_ON:
            return self.edit_on_sign
        return self.edit_off_sign


class MetaboliteModel(BaseModel):
    """Parametric line list of a single metabolite"""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    lines: Tuple[SpectralLine, ...] = Field(..., min_length=1)

    def scaled(self, factor: float) -> "MetaboliteModel":
        return MetaboliteModel(
            name=self.name,
            lines=tuple(
                line.model_copy(
                    update={"relative_amplitude": line.relative_amplitude * factor}
                )
                for line in self.lines
            ),
        )


class BasisDefinition(BaseModel):
    """Contents of a basis definition file"""

    metabolites: List[MetaboliteModel] = Field(..., min_length=1)


class InputConfig(BaseModel):
    """Which acquisitions and components make up the rows of a network input."""

    model_config = ConfigDict(frozen=True)

    acquisitions: Tuple[AcquisitionKind, ...] = (
        AcquisitionKind.EDIT_OFF,
        AcquisitionKind.DIFFERENCE,
    )
    components: Tuple[ComponentKind, ...] = (ComponentKind.MAGNITUDE,)
    window: PpmWindow = Field(default_factory=default_window)
    b0_correct: bool = True
    butterworth: bool = True
    # fraction of Nyquist; None keeps the window inside the passband
    butterworth_cutoff: Optional[float] = Field(
        default_factory=lambda: config.BUTTERWORTH_CUTOFF
    )

    @field_validator("acquisitions", "components")
    @classmethod
    def _non_empty_unique(cls, value: tuple) -> tuple:
        if not value:
            raise ValueError("must name at least one entry")
        if len(set(value)) != len(value):
            raise ValueError("entries must be unique")
        return value

    @property
    def rows(self) -> int:
        return len(self.acquisitions) * len(self.components)

    @classmethod
    def from_text(cls, acquisitions: str, components: str, **kwargs: Any) -> "InputConfig":
        """Build from CLI text such as `off,diff` and `m`."""
        return cls(
            acquisitions=tuple(
                parse_acquisition(a) for a in acquisitions.split(",") if a.strip()
            ),
            components=tuple(
                ComponentKind.parse(c) for c in components.split(",") if c.strip()
            ),
            **kwargs,
        )


class NetworkConfig(BaseModel):
    """Architecture variant of the quantification network"""

    model_config = ConfigDict(frozen=True)

    size_variant: SizeVariant = SizeVariant.SMALL
    reduction_variant: ReductionVariant = ReductionVariant.STRIDED
    input_rows: int = Field(2, ge=1, le=9)
    input_cols: int = Field(2048, ge=1)
    output_dim: int = Field(5, ge=1)
    channel_scale: float = Field(1.0, gt=0.0, le=1.0)
    metabolites: Tuple[str, ...] = DEFAULT_METABOLITES

    @model_validator(mode="after")
    def _check_labels(self) -> "NetworkConfig":
        if len(self.metabolites) != self.output_dim:
            raise ValueError(
                f"{len(self.metabolites)} metabolite labels for output_dim {self.output_dim}"
            )
        return self


class TrainConfig(BaseModel):
    """Optimiser and early-stopping settings"""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(1e-4, ge=0.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)
    batch_size: int = Field(64, ge=1)
    max_epochs: int = Field(200, ge=1)
    early_stop_min_delta: float = Field(1e-12, ge=0.0)
    early_stop_patience: int = Field(15, ge=1)
    restore_best: bool = True
    seed: int = Field(0, ge=0)


class RunManifest(BaseModel):
    """Record written beside the outputs of every command."""

    command: str
    config_snapshot: Dict[str, Any]
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    tool_version: str
    started_at: datetime
    duration_s: float = Field(0.0, ge=0.0)
