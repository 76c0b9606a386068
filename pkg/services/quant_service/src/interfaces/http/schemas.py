from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class ComplexArray(BaseModel):
    """
    Complex time-domain samples split into real and imaginary parts.
    Both lists must have the same, non-zero length.
    """

    real: List[float] = Field(..., min_length=1)
    imag: List[float] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _same_length(self) -> "ComplexArray":
        if len(self.real) != len(self.imag):
            raise ValueError("real and imag must have the same length")
        return self


class QuantifyRequest(BaseModel):
    """
    Schema for a single MEGA-PRESS scan to quantify.
    Keys of `acquisitions` are `off`, `on` or `diff`.
    """

    acquisitions: Dict[str, ComplexArray] = Field(
        ..., min_length=1, description="Time-domain acquisitions keyed by kind"
    )
    bandwidth_hz: float = Field(..., gt=0.0, description="Acquisition bandwidth in Hz")
    reference_frequency_mhz: float = Field(
        ..., gt=0.0, description="Spectrometer reference frequency in MHz"
    )
    carrier_ppm: Optional[float] = Field(None, description="Receiver carrier position")


class QuantifyResponse(BaseModel):
    predictor: str
    concentrations: Dict[str, float]
    latency_ms: float
