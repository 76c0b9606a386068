from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from pydantic import ValidationError

from src.config.logger_config import log
from src.core.exceptions import FormatError, QuantError, StorageError
from src.domain.models import AcquisitionKind, PpmWindow, Split
from src.domain.spectra import Dataset, Sample, Spectrum
from src.infrastructure.storage.archive import PREAMBLE, ArchiveCodec


class DatasetStore:
    """
    Dataset archives (magic MRSDATA1). Spectra of all samples are stacked per
    acquisition as N x bins complex arrays on one shared ppm axis; labels and
    noise levels live in the header. Output is byte-identical for equal datasets.
    """

    def __init__(self):
        self.codec = ArchiveCodec(b"MRSDATA1", version=1)

    def save(self, dataset: Dataset, path: Union[str, Path]) -> Path:
        if not dataset.samples:
            raise StorageError("Cannot archive an empty dataset")
        if any(s.time_signals for s in dataset.samples):
            raise StorageError("Dataset archives hold window-grid samples only; store scans separately")

        acquisitions = list(dataset.samples[0].spectra)
        if any(list(s.spectra) != acquisitions for s in dataset.samples):
            raise StorageError("Samples of one dataset must carry the same acquisitions")
        axis = dataset.samples[0].spectra[acquisitions[0]].ppm_axis

        arrays: Dict[str, np.ndarray] = {"ppm_axis": axis}
        for acq in acquisitions:
            arrays[f"spectra/{acq.value}"] = np.stack(
                [s.spectra[acq].values for s in dataset.samples]
            )
        header = {
            "basis_tag": dataset.basis_tag,
            "seed": dataset.seed,
            "split": dataset.split.value,
            "metabolites": list(dataset.metabolites),
            "window": dataset.window.model_dump(),
            "acquisitions": [acq.value for acq in acquisitions],
            "samples": [
                {
                    "label": s.label,
                    "concentrations": s.concentrations,
                    "noise_sigma": s.noise_sigma,
                    "basis_tag": s.basis_tag,
                }
                for s in dataset.samples
            ],
        }
        path = self.codec.write(path, header, arrays)
        log.info("Dataset saved", path=str(path), count=len(dataset), split=dataset.split.value)
        return path

    def load(self, path: Union[str, Path]) -> Dataset:
        _, header, arrays = self.codec.read(path)
        try:
            axis = arrays["ppm_axis"]
            axis.setflags(write=False)
            acquisitions = [AcquisitionKind(a) for a in header["acquisitions"]]
            stacks = {acq: arrays[f"spectra/{acq.value}"] for acq in acquisitions}
            for acq, stack in stacks.items():
                if stack.shape[0] != len(header["samples"]):
                    raise FormatError(
                        f"Dataset archive {path} header lists {len(header['samples'])} samples "
                        f"but the {acq.value} payload holds {stack.shape[0]}",
                        offset=PREAMBLE.size,
                    )
            samples: List[Sample] = []
            for i, meta in enumerate(header["samples"]):
                spectra = {
                    acq: Spectrum(values=stacks[acq][i], ppm_axis=axis, acquisition=acq)
                    for acq in acquisitions
                }
                samples.append(Sample(spectra=spectra, **meta))
            return Dataset(
                samples=samples,
                basis_tag=header["basis_tag"],
                seed=header["seed"],
                split=Split(header["split"]),
                metabolites=tuple(header["metabolites"]),
                window=PpmWindow(**header["window"]),
            )
        except FormatError:
            raise
        except (KeyError, IndexError, ValueError, TypeError, ValidationError, QuantError) as e:
            raise FormatError(
                f"Dataset archive {path} is inconsistent: {e}",
                offset=PREAMBLE.size,
                original_exception=e,
            ) from e
