"""
Result records: fits, training history and evaluation reports.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.exceptions import ShapeError


class FitResult(BaseModel):
    """Outcome of a non-negative basis fit"""

    model_config = ConfigDict(frozen=True)

    concentrations: Dict[str, float]
    coefficients: Dict[str, float]
    residual_norm: float = Field(..., ge=0.0)
    iterations: int = Field(..., ge=0)

    @field_validator("concentrations", "coefficients")
    @classmethod
    def _non_negative(cls, value: Dict[str, float]) -> Dict[str, float]:
        if any(v < 0.0 for v in value.values()):
            raise ValueError("fitted concentrations must be non-negative")
        return value


class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    train_loss: float
    val_loss: float
    val_error: float
    duration_s: float = 0.0


class TrainingHistory(BaseModel):
    """Per-epoch losses of a training run"""

    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    def __len__(self) -> int:
        return len(self.epochs)


class EvaluationRecord(BaseModel):
    """Actual vs predicted relative concentrations, N samples x L labels."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    actual: np.ndarray
    predicted: np.ndarray
    labels: Tuple[str, ...]
    excluded_rows: int = Field(0, ge=0)
    # rows kept as zeros because the prediction had no mass in the reduced set
    zero_predictions: int = Field(0, ge=0)

    @field_validator("actual", "predicted", mode="before")
    @classmethod
    def _as_matrix(cls, value) -> np.ndarray:
        array = np.array(value, dtype=np.float64, copy=True)
        if array.ndim == 1:
            array = array[:, None]
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shapes(self) -> "EvaluationRecord":
        if self.actual.shape != self.predicted.shape:
            raise ShapeError(
                f"actual {self.actual.shape} and predicted {self.predicted.shape} differ"
            )
        if self.actual.ndim != 2 or self.actual.shape[1] != len(self.labels):
            raise ShapeError(
                f"{len(self.labels)} labels for a record of shape {self.actual.shape}"
            )
        if np.any(self.actual < 0.0) or np.any(self.predicted < 0.0):
            raise ValueError("relative concentrations must be non-negative")
        return self

    @property
    def count(self) -> int:
        return self.actual.shape[0]


class RegressionStats(BaseModel):
    slope: float
    intercept: float
    r_squared: float = Field(..., ge=0.0, le=1.0)
    p_value: float = Field(..., ge=0.0, le=1.0)
    std_error: float = Field(..., ge=0.0)


class EvaluationReport(BaseModel):
    """Metrics of one predictor on one dataset; serialised as one JSON document."""

    predictor: str
    dataset: str
    count: int = Field(..., ge=0)
    labels: List[str]
    epsilon: float
    sigma: float
    sigma_conventional: float
    mape: Dict[str, Optional[float]]
    regression: Dict[str, Optional[RegressionStats]]
    excluded_rows: int = 0
    zero_predictions: int = 0
    reduction: Optional[List[str]] = None
    merge_glx: bool = False
