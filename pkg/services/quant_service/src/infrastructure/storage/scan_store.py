from pathlib import Path
from typing import Dict, Optional, Union

from pydantic import ValidationError

from src.core.exceptions import FormatError, QuantError, StorageError
from src.domain.models import AcquisitionKind
from src.domain.spectra import ConcentrationVector, Sample, TimeSignal
from src.infrastructure.storage.archive import ArchiveCodec

SCAN_SUFFIX = ".mrsscan"


class ScanStore:
    """
    Experimental-spectrum containers (magic MRSSCAN1): one complex time-domain
    array per acquisition, all sharing bandwidth, reference frequency and length.
    """

    def __init__(self):
        self.codec = ArchiveCodec(b"MRSSCAN1", version=1)

    def save(
        self,
        signals: Dict[AcquisitionKind, TimeSignal],
        path: Union[str, Path],
        label: Optional[ConcentrationVector] = None,
    ) -> Path:
        if not signals:
            raise StorageError("A scan needs at least one acquisition")
        first = next(iter(signals.values()))
        for acq, signal in signals.items():
            if (
                signal.bandwidth_hz != first.bandwidth_hz
                or signal.reference_frequency_mhz != first.reference_frequency_mhz
                or signal.samples.size != first.samples.size
            ):
                raise StorageError(f"Acquisition {acq.value} does not match the scan parameters")
        header = {
            "bandwidth_hz": first.bandwidth_hz,
            "reference_frequency_mhz": first.reference_frequency_mhz,
            "carrier_ppm": first.carrier_ppm,
            "samples": int(first.samples.size),
            "acquisitions": [acq.value for acq in signals],
            "label": dict(label or {}),
        }
        arrays = {f"signal/{acq.value}": s.samples for acq, s in signals.items()}
        return self.codec.write(path, header, arrays)

    def save_sample(self, sample: Sample, path: Union[str, Path]) -> Path:
        return self.save(sample.time_signals, path, sample.label)

    def load(self, path: Union[str, Path]) -> Sample:
        _, header, arrays = self.codec.read(path)
        try:
            signals = {}
            for name in header["acquisitions"]:
                samples = arrays[f"signal/{name}"]
                if samples.size != header["samples"]:
                    raise FormatError(
                        f"Scan {path}: acquisition {name} has {samples.size} samples, "
                        f"header declares {header['samples']}"
                    )
                signals[AcquisitionKind(name)] = TimeSignal(
                    samples=samples,
                    bandwidth_hz=header["bandwidth_hz"],
                    reference_frequency_mhz=header["reference_frequency_mhz"],
                    carrier_ppm=header["carrier_ppm"],
                )
            return Sample(time_signals=signals, label=header.get("label") or {})
        except FormatError:
            raise
        except (KeyError, ValueError, TypeError, ValidationError, QuantError) as e:
            raise FormatError(f"Scan {path} is inconsistent: {e}") from e
