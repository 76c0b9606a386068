"""
JSON documents: evaluation reports, phantom manifests and run manifests.
"""

from pathlib import Path
from typing import Optional, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from src.config.logger_config import log
from src.core.exceptions import FormatError, StorageError
from src.domain.models import DEFAULT_METABOLITES, PpmWindow, RunManifest, Split
from src.domain.phantoms import PhantomManifest
from src.domain.results import EvaluationReport
from src.domain.spectra import Dataset, Sample
from src.infrastructure.storage.scan_store import ScanStore

M = TypeVar("M", bound=BaseModel)


def _write_json(model: BaseModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"Cannot write {path}: {e.strerror}", original_exception=e) from e
    return path


def _read_json(model: Type[M], path: Union[str, Path]) -> M:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}", original_exception=e) from e
    except OSError as e:
        raise StorageError(f"Cannot read {path}: {e.strerror}", original_exception=e) from e
    try:
        return model.model_validate_json(text)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "document"
        raise FormatError(f"{path}: {where}: {first['msg']}", original_exception=e) from e


def save_report(report: EvaluationReport, path: Union[str, Path]) -> Path:
    path = _write_json(report, path)
    log.info("Report saved", path=str(path), predictor=report.predictor)
    return path


def load_report(path: Union[str, Path]) -> EvaluationReport:
    return _read_json(EvaluationReport, path)


def save_phantom_manifest(manifest: PhantomManifest, path: Union[str, Path]) -> Path:
    return _write_json(manifest, path)


def load_phantom_manifest(path: Union[str, Path]) -> PhantomManifest:
    return _read_json(PhantomManifest, path)


def phantom_dataset(
    manifest_path: Union[str, Path],
    metabolites: Sequence[str] = DEFAULT_METABOLITES,
    window: Optional[PpmWindow] = None,
    scans: Optional[ScanStore] = None,
) -> Dataset:
    """
    Load every scan of a phantom manifest, labelled with its molar composition
    divided by the sum over `metabolites`. Scan paths resolve relative to the manifest.
    """
    manifest_path = Path(manifest_path)
    manifest = load_phantom_manifest(manifest_path)
    scans = scans or ScanStore()
    samples = []
    for entry in manifest.entries:
        scan = scans.load(manifest_path.parent / entry.path)
        samples.append(
            Sample(
                time_signals=scan.time_signals,
                label=entry.relative(metabolites),
                concentrations=dict(entry.concentrations_mm),
                basis_tag=f"phantom:{manifest.series}",
            )
        )
    log.info("Phantom series loaded", series=manifest.series, scans=len(samples))
    return Dataset(
        samples=samples,
        basis_tag=f"phantom:{manifest.series}",
        seed=0,
        split=Split.TEST,
        metabolites=tuple(metabolites),
        window=window or PpmWindow(),
    )


def artifact_path(output: Union[str, Path], suffix: str) -> Path:
    """Sibling of a command's primary output: `<stem><suffix>` in the same directory."""
    output = Path(output)
    return output.parent / f"{output.stem}{suffix}"


def save_run_manifest(manifest: RunManifest, path: Union[str, Path]) -> Path:
    return _write_json(manifest, path)


def load_run_manifest(path: Union[str, Path]) -> RunManifest:
    return _read_json(RunManifest, path)
