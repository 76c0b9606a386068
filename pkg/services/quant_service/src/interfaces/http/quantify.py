import time

import numpy as np
from fastapi import APIRouter, Depends, HTTPException, status

from src.application.quantification_service import NetworkQuantifier
from src.config.logger_config import log
from src.core.exceptions import QuantError
from src.domain.models import parse_acquisition
from src.domain.spectra import Sample, TimeSignal
from src.interfaces.http.dependencies import get_quantifier
from src.interfaces.http.schemas import QuantifyRequest, QuantifyResponse

router = APIRouter(prefix="/quantify", tags=["quantify"])


def sample_from_request(request: QuantifyRequest) -> Sample:
    """Build an unlabelled scan sample from the request payload."""
    extra = {} if request.carrier_ppm is None else {"carrier_ppm": request.carrier_ppm}
    signals = {}
    for name, values in request.acquisitions.items():
        signals[parse_acquisition(name)] = TimeSignal(
            samples=np.asarray(values.real) + 1j * np.asarray(values.imag),
            bandwidth_hz=request.bandwidth_hz,
            reference_frequency_mhz=request.reference_frequency_mhz,
            **extra,
        )
    return Sample(time_signals=signals)


@router.post("", response_model=QuantifyResponse)
def quantify(
    request: QuantifyRequest,
    quantifier: NetworkQuantifier = Depends(get_quantifier),
):
    """
    Quantify one scan.
    - 400 when the scan cannot be pre-processed for the loaded model
    - 503 when no model is loaded
    """
    started = time.perf_counter()
    try:
        sample = sample_from_request(request)
        concentrations = quantifier.quantify(sample)
    except ValueError as e:
        log.warning("Quantify request rejected: invalid acquisitions", error=str(e))
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e)) from e
    except QuantError as e:
        log.warning("Quantify request rejected", error=e.message)
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST, detail=e.message
        ) from e

    latency_ms = (time.perf_counter() - started) * 1000.0
    log.info("Scan quantified", predictor=quantifier.name, latency_ms=round(latency_ms, 2))
    return QuantifyResponse(
        predictor=quantifier.name,
        concentrations=concentrations,
        latency_ms=latency_ms,
    )
