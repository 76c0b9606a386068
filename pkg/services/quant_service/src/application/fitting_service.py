"""
Non-negative least-squares basis fitting, the baseline the network is compared with.

The design matrix holds each metabolite's basis spectra run through the same
window/component pipeline as the observation, flattened across rows. Rows are
not normalised, so the fit stays linear in the concentrations.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from src.application.preprocessing import component_rows, window_spectra
from src.config.logger_config import log
from src.core.exceptions import ConvergenceError, NoBasisError, ShapeError
from src.domain.models import InputConfig
from src.domain.results import FitResult
from src.domain.spectra import BasisSet, Sample

NNLS_TOLERANCE = 1e-10


def observed_rows(sample: Sample, cfg: InputConfig) -> np.ndarray:
    """Unnormalised component rows of a sample, the observation side of the fit."""
    return component_rows(window_spectra(sample, cfg), cfg)


def design_matrix(
    basis: BasisSet, cfg: InputConfig, metabolites: Optional[Sequence[str]] = None
) -> np.ndarray:
    """
    (rows * bins) x M matrix whose columns are the flattened component rows
    of each metabolite's basis spectra.
    """
    names = list(metabolites or basis.metabolites)
    if not names:
        raise NoBasisError("Basis set has no metabolites to fit")
    columns = [
        observed_rows(Sample(spectra=basis.entries[name]), cfg).ravel() for name in names
    ]
    return np.stack(columns, axis=1)


def lawson_hanson(
    a: np.ndarray,
    y: np.ndarray,
    tol: float = NNLS_TOLERANCE,
    max_iterations: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """
    Active-set solution of min ||a x - y|| subject to x >= 0.

    `tol` is scaled by ||a|| ||y|| when testing the dual vector, so it is
    independent of the data units.

    Returns:
        (x, iterations) where iterations counts variables entering the passive set.
    Raises:
        ConvergenceError: After `max_iterations` (default 10 * columns); the
            error carries the best iterate.
    """
    n = a.shape[1]
    max_iterations = max_iterations or 10 * n
    threshold = tol * max(1.0, float(np.linalg.norm(a) * np.linalg.norm(y)))

    passive = np.zeros(n, dtype=bool)
    rejected = np.zeros(n, dtype=bool)
    x = np.zeros(n, dtype=np.float64)
    iterations = 0

    def solve(mask: np.ndarray) -> np.ndarray:
        s = np.zeros(n, dtype=np.float64)
        if mask.any():
            s[mask] = np.linalg.lstsq(a[:, mask], y, rcond=None)[0]
        return s

    while True:
        w = a.T @ (y - a @ x)
        candidates = ~passive & ~rejected
        if not candidates.any() or w[candidates].max() <= threshold:
            break
        if iterations >= max_iterations:
            raise ConvergenceError(
                f"NNLS did not converge in {max_iterations} iterations", best=x.copy()
            )
        iterations += 1
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        s = solve(passive)
        if s[j] <= 0.0:
            # numerically zero dual entry; the column cannot enter
            passive[j] = False
            rejected[j] = True
            continue
        rejected[:] = False

        while np.any(s[passive] <= 0.0):
            blocking = np.flatnonzero(passive & (s <= 0.0))
            ratios = x[blocking] / (x[blocking] - s[blocking])
            k = int(blocking[np.argmin(ratios)])
            x = x + float(ratios.min()) * (s - x)
            x[k] = 0.0
            passive &= x > np.finfo(np.float64).eps * max(1.0, float(np.abs(x).max()))
            passive[k] = False
            x[~passive] = 0.0
            s = solve(passive)
        x = s
    return x, iterations


def nnls_fit(
    observed: np.ndarray,
    basis: BasisSet,
    cfg: InputConfig,
    metabolites: Optional[Sequence[str]] = None,
    design: Optional[np.ndarray] = None,
) -> FitResult:
    """
    Fit an observation with a non-negative combination of basis spectra.

    Args:
        observed: rows x bins matrix assembled with `cfg` (no normalisation).
        basis: Basis set supplying one column per metabolite.
        cfg: Input configuration shared by observation and design matrix.
        design: Precomputed `design_matrix(basis, cfg, metabolites)`.
    Returns:
        FitResult with concentrations normalised to sum 1 (an all-zero fit is
        reported as zeros) and the raw coefficients.
    Raises:
        ShapeError: If `observed` does not have cfg.rows x window bins entries.
        ConvergenceError: If the active-set loop exhausts its iterations.
    """
    names = list(metabolites or basis.metabolites)
    observed = np.asarray(observed, dtype=np.float64)
    expected = (cfg.rows, cfg.window.bins)
    if observed.shape != expected:
        raise ShapeError(f"Observation has shape {observed.shape}, expected {expected}")

    a = design_matrix(basis, cfg, names) if design is None else design
    if a.shape != (observed.size, len(names)):
        raise ShapeError(
            f"Design matrix has shape {a.shape}, expected {(observed.size, len(names))}"
        )
    y = observed.ravel()
    try:
        x, iterations = lawson_hanson(a, y)
    except ConvergenceError as e:
        log.error("NNLS fit did not converge", basis=basis.tag, error=e.message)
        e.best = _result(names, e.best, a, y, 10 * len(names))
        raise

    result = _result(names, x, a, y, iterations)
    log.debug(
        "NNLS fit complete",
        basis=basis.tag,
        iterations=iterations,
        residual=result.residual_norm,
    )
    return result


def _result(
    names: Sequence[str], x: np.ndarray, a: np.ndarray, y: np.ndarray, iterations: int
) -> FitResult:
    x = np.clip(x, 0.0, None)
    total = float(x.sum())
    relative = x / total if total > 0.0 else x
    return FitResult(
        concentrations={n: float(v) for n, v in zip(names, relative)},
        coefficients={n: float(v) for n, v in zip(names, x)},
        residual_norm=float(np.linalg.norm(y - a @ x)),
        iterations=iterations,
    )


def fit_sample(
    sample: Sample,
    basis: BasisSet,
    cfg: InputConfig,
    metabolites: Optional[Sequence[str]] = None,
    design: Optional[np.ndarray] = None,
) -> FitResult:
    """Run a sample through the shared pipeline and fit it."""
    return nnls_fit(observed_rows(sample, cfg), basis, cfg, metabolites, design)
