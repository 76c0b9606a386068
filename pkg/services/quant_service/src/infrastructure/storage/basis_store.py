from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from pydantic import ValidationError

from src.config.logger_config import log
from src.core.exceptions import FormatError, NoBasisError, QuantError
from src.domain.models import AcquisitionKind, PpmWindow
from src.domain.spectra import BasisSet, Spectrum, SynthesisParameters
from src.infrastructure.storage.archive import PREAMBLE, ArchiveCodec

BASIS_SUFFIX = ".mrsb"


class BasisStore:
    """Basis-set archives (magic MRSBASIS): spectra, FIDs and synthesis parameters."""

    def __init__(self):
        self.codec = ArchiveCodec(b"MRSBASIS", version=1)

    @staticmethod
    def file_name(basis: BasisSet) -> str:
        return f"basis_{basis.linewidth_hz:g}hz{BASIS_SUFFIX}"

    def save(self, basis: BasisSet, path: Union[str, Path]) -> Path:
        arrays: Dict[str, np.ndarray] = {"ppm_axis": basis.ppm_axis}
        layout = {}
        for name, spectra in basis.entries.items():
            layout[name] = [acq.value for acq in spectra]
            for acq, spectrum in spectra.items():
                arrays[f"spectrum/{name}/{acq.value}"] = spectrum.values
        for name, fids in basis.fids.items():
            for acq, fid in fids.items():
                arrays[f"fid/{name}/{acq.value}"] = fid
        header = {
            "linewidth_hz": basis.linewidth_hz,
            "source_tag": basis.source_tag,
            "window": basis.window.model_dump(),
            "synthesis": basis.synthesis.model_dump() if basis.synthesis else None,
            "metabolites": layout,
            # header keys are sorted on disk
            "order": list(layout),
        }
        return self.codec.write(path, header, arrays)

    def load(self, path: Union[str, Path]) -> BasisSet:
        _, header, arrays = self.codec.read(path)
        try:
            axis = arrays["ppm_axis"]
            axis.setflags(write=False)
            layout = header["metabolites"]
            names = header.get("order") or list(layout)
            if sorted(names) != sorted(layout):
                raise FormatError(
                    f"Basis archive {path} orders {names} but lists {list(layout)}",
                    offset=PREAMBLE.size,
                )
            entries = {
                name: {
                    AcquisitionKind(acq): Spectrum(
                        values=arrays[f"spectrum/{name}/{acq}"],
                        ppm_axis=axis,
                        acquisition=AcquisitionKind(acq),
                    )
                    for acq in layout[name]
                }
                for name in names
            }
            fids: Dict[str, Dict[AcquisitionKind, np.ndarray]] = {}
            for key, array in arrays.items():
                if key.startswith("fid/"):
                    name, acq = key.split("/", 1)[1].rsplit("/", 1)
                    fids.setdefault(name, {})[AcquisitionKind(acq)] = array
            synthesis = header.get("synthesis")
            return BasisSet(
                entries=entries,
                linewidth_hz=header["linewidth_hz"],
                window=PpmWindow(**header["window"]),
                source_tag=header.get("source_tag", "parametric-v1"),
                fids=fids,
                synthesis=SynthesisParameters(**synthesis) if synthesis else None,
            )
        except FormatError:
            raise
        except (KeyError, ValueError, TypeError, ValidationError, QuantError) as e:
            raise FormatError(
                f"Basis archive {path} is inconsistent: {e}",
                offset=PREAMBLE.size,
                original_exception=e,
            ) from e

    def save_all(self, bases: Sequence[BasisSet], directory: Union[str, Path]) -> List[Path]:
        directory = Path(directory)
        paths = [self.save(basis, directory / self.file_name(basis)) for basis in bases]
        log.info("Basis sets saved", directory=str(directory), count=len(paths))
        return paths

    def load_all(self, location: Union[str, Path]) -> List[BasisSet]:
        """
        Load one archive or every archive in a directory, ordered by linewidth.

        Raises:
            NoBasisError: If the location holds no basis archive.
        """
        location = Path(location)
        if location.is_dir():
            paths = sorted(location.glob(f"*{BASIS_SUFFIX}"))
        elif location.exists():
            paths = [location]
        else:
            paths = []
        if not paths:
            raise NoBasisError(f"No basis archives found at {location}")
        bases = sorted((self.load(p) for p in paths), key=lambda b: b.linewidth_hz)
        log.debug("Basis sets loaded", location=str(location), count=len(bases))
        return bases
