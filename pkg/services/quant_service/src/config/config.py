import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel
from pydantic_settings import BaseSettings, SettingsConfigDict


class SynthesisConfig(BaseModel):
    """Acquisition parameters used when rendering basis spectra"""

    SAMPLES: int
    BANDWIDTH_HZ: float
    REFERENCE_FREQUENCY_MHZ: float
    CARRIER_PPM: float


class B0Config(BaseModel):
    """Reference peak search used by B0 correction"""

    REFERENCE_PPM: float
    SEARCH_HALF_WIDTH_PPM: float
    PEAK_FACTOR: float


class Config(BaseSettings):
    """Config settings"""

    ENV: str = "development"

    # Workers
    THREADS: Optional[int] = None

    # Spectrometer
    REFERENCE_FREQUENCY_MHZ: float = 127.0
    CARRIER_PPM: float = 4.7

    # Basis synthesis
    SYNTH_SAMPLES: int = 8192
    SYNTH_BANDWIDTH_HZ: float = 2000.0

    # Network input window
    WINDOW_HIGH_PPM: float = 4.5
    WINDOW_LOW_PPM: float = 1.5
    WINDOW_BINS: int = 2048

    # Dataset noise model
    NOISE_SIGMA_MAX: float = 0.25
    NOISY_FRACTION: float = 0.5

    # Pre-processing
    # None derives the cutoff per scan from the window edge
    BUTTERWORTH_CUTOFF: Optional[float] = None
    BUTTERWORTH_PASSBAND_LOSS: float = 0.01
    BUTTERWORTH_MAX_CUTOFF: float = 0.99
    B0_REFERENCE_PPM: float = 2.008
    B0_SEARCH_HALF_WIDTH_PPM: float = 0.2
    B0_PEAK_FACTOR: float = 3.0

    # Quantification service
    MODEL_PATH: Optional[str] = None
    HTTP_HOST: str = "0.0.0.0"
    HTTP_PORT: int = 8020

    LOG_DIR: str = "logs"

    @property
    def worker_count(self) -> int:
        """Number of worker threads, capped by MRSQUANT_THREADS"""
        available = os.cpu_count() or 1
        if self.THREADS is None:
            return available
        return max(1, min(self.THREADS, available))

    @property
    def synthesis(self) -> SynthesisConfig:
        """Method to return basis synthesis parameters"""
        return SynthesisConfig(
            SAMPLES=self.SYNTH_SAMPLES,
            BANDWIDTH_HZ=self.SYNTH_BANDWIDTH_HZ,
            REFERENCE_FREQUENCY_MHZ=self.REFERENCE_FREQUENCY_MHZ,
            CARRIER_PPM=self.CARRIER_PPM,
        )

    @property
    def b0(self) -> B0Config:
        """Method to return B0 correction parameters"""
        return B0Config(
            REFERENCE_PPM=self.B0_REFERENCE_PPM,
            SEARCH_HALF_WIDTH_PPM=self.B0_SEARCH_HALF_WIDTH_PPM,
            PEAK_FACTOR=self.B0_PEAK_FACTOR,
        )

    model_config = SettingsConfigDict(
        env_prefix="MRSQUANT_",
        env_file=Path(__file__).resolve().parent.parent.parent / ".env.quant",
        env_file_encoding="utf-8",
        extra="ignore",
    )


config = Config()
