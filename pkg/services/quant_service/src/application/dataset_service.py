"""
Synthetic dataset generation: Sobol-sampled concentration vectors, linear
mixtures of basis spectra, and time-domain Gaussian noise.

Every random draw is keyed on (dataset seed, sample index) through numpy's
counter-based Philox generator, so a sample is reproducible on its own and
generation order does not matter.
"""

import warnings
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from src.application.signal_processing import difference_spectrum, zoom_transform
from src.config.config import config
from src.config.logger_config import log
from src.core.exceptions import (
    DatasetError,
    DegenerateSampleError,
    NoBasisError,
    UnknownMetaboliteError,
    UnsupportedDimensionError,
)
from src.domain.models import AcquisitionKind, Split
from src.domain.spectra import (
    BasisSet,
    ConcentrationVector,
    Dataset,
    Sample,
    Spectrum,
    TimeSignal,
)
from src.infrastructure.workers import parallel_map
from shared.libs.observability.metrics import SAMPLES_SYNTHESIZED

MAX_SOBOL_DIMENSION = 16
SIGMA_STREAM = 1

RngSeed = Union[int, Tuple[int, ...]]


def _generator(key: RngSeed) -> np.random.Generator:
    entropy = list(key) if isinstance(key, tuple) else key
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def sobol_sequence(dim: int, count: int, skip: int = 1) -> np.ndarray:
    """
    Unscrambled Sobol points (Joe-Kuo direction numbers) as a count x dim array.

    Args:
        dim: Dimension, 1..16.
        count: Number of points.
        skip: Index of the first point; 1 drops the all-zeros origin.
    Raises:
        UnsupportedDimensionError: If dim is outside [1, 16].
    """
    if not 1 <= dim <= MAX_SOBOL_DIMENSION:
        raise UnsupportedDimensionError(
            f"Sobol dimension must be in [1, {MAX_SOBOL_DIMENSION}], got {dim}"
        )
    if count < 1:
        raise DatasetError(f"Sobol count must be at least 1, got {count}")
    if skip < 0:
        raise DatasetError(f"Sobol skip must be non-negative, got {skip}")

    engine = qmc.Sobol(d=dim, scramble=False)
    with warnings.catch_warnings():
        # non power-of-two counts trigger a balance-property warning
        warnings.simplefilter("ignore", UserWarning)
        if skip:
            engine.fast_forward(skip)
        return engine.random(count)


def concentration_vectors(
    metabolites: Sequence[str], count: int, start: int = 1
) -> List[ConcentrationVector]:
    """Sobol concentration vectors from index `start` on, skipping all-zero points."""
    points = sobol_sequence(len(metabolites), count, skip=start)
    kept = points[points.sum(axis=1) > 0.0]
    next_index = start + count
    while kept.shape[0] < count:
        missing = count - kept.shape[0]
        extra = sobol_sequence(len(metabolites), missing, skip=next_index)
        next_index += missing
        kept = np.vstack([kept, extra[extra.sum(axis=1) > 0.0]])
    return [dict(zip(metabolites, (float(v) for v in row))) for row in kept]


def _check_concentrations(basis: BasisSet, c: ConcentrationVector) -> float:
    unknown = [name for name in c if name not in basis.entries]
    if unknown:
        raise UnknownMetaboliteError(
            f"Metabolites {unknown} are not in basis {basis.tag}"
        )
    if any(v < 0.0 or v > 1.0 for v in c.values()):
        raise DatasetError("Concentrations must lie in [0, 1]")
    total = float(sum(c.values()))
    if total <= 0.0:
        raise DegenerateSampleError("Every concentration of the sample is zero")
    return total


def _mixture_fids(
    basis: BasisSet, c: ConcentrationVector
) -> Dict[AcquisitionKind, np.ndarray]:
    if not basis.fids or basis.synthesis is None:
        raise DatasetError(
            f"Basis {basis.tag} carries no time-domain signals; noise cannot be added"
        )
    return {
        acq: sum(c[name] * basis.fids[name][acq] for name in c)
        for acq in (AcquisitionKind.EDIT_OFF, AcquisitionKind.EDIT_ON)
    }


def _complex_noise(
    rng: np.random.Generator, sigma: float, scale: float, samples: int
) -> np.ndarray:
    draws = rng.standard_normal((2, samples))
    return sigma * scale * (draws[0] + 1j * draws[1])


def synthesize_sample(
    basis: BasisSet,
    c: ConcentrationVector,
    noise_sigma: float,
    rng_seed: RngSeed,
) -> Sample:
    """
    Mix basis spectra with weights `c` and optionally add time-domain noise.

    Noise is complex Gaussian with standard deviation `noise_sigma` relative to
    the peak of the noiseless mixture's time signal, drawn independently for
    edit-off and edit-on and carried to the window by the same zero-filled
    transform the basis went through.

    Raises:
        UnknownMetaboliteError: If `c` names a metabolite absent from the basis.
        DegenerateSampleError: If every concentration is zero.
    """
    if noise_sigma < 0.0:
        raise DatasetError(f"Noise sigma must be non-negative, got {noise_sigma}")
    total = _check_concentrations(basis, c)

    spectra: Dict[AcquisitionKind, Spectrum] = {}
    for acq in (AcquisitionKind.EDIT_OFF, AcquisitionKind.EDIT_ON):
        values = sum(c[name] * basis.entries[name][acq].values for name in c)
        spectra[acq] = Spectrum(values=values, ppm_axis=basis.ppm_axis, acquisition=acq)

    if noise_sigma > 0.0:
        synthesis = basis.synthesis
        fids = _mixture_fids(basis, c)
        rng = _generator(rng_seed)
        for acq, fid in fids.items():
            scale = float(np.max(np.abs(fid)))
            noise = _complex_noise(rng, noise_sigma, scale, synthesis.samples)
            noise_spectrum = zoom_transform(
                noise,
                synthesis.bandwidth_hz,
                synthesis.reference_frequency_mhz,
                synthesis.carrier_ppm,
                basis.window,
            )
            spectra[acq] = spectra[acq].with_values(spectra[acq].values + noise_spectrum)

    spectra[AcquisitionKind.DIFFERENCE] = difference_spectrum(
        spectra[AcquisitionKind.EDIT_ON], spectra[AcquisitionKind.EDIT_OFF]
    )
    return Sample(
        spectra=spectra,
        label={name: v / total for name, v in c.items()},
        concentrations=dict(c),
        noise_sigma=noise_sigma,
        basis_tag=basis.tag,
    )


def synthesize_scan(
    basis: BasisSet,
    c: ConcentrationVector,
    noise_sigma: float = 0.0,
    rng_seed: RngSeed = 0,
    shift_ppm: float = 0.0,
) -> Sample:
    """
    Render a basis mixture as a time-domain scan, as a scanner would deliver it.

    `shift_ppm` moves every resonance by the same chemical-shift offset, the
    frequency drift that B0 correction removes.
    """
    if noise_sigma < 0.0:
        raise DatasetError(f"Noise sigma must be non-negative, got {noise_sigma}")
    total = _check_concentrations(basis, c)
    synthesis = basis.synthesis
    fids = _mixture_fids(basis, c)

    t = np.arange(synthesis.samples, dtype=np.float64) / synthesis.bandwidth_hz
    drift = np.exp(-2j * np.pi * shift_ppm * synthesis.reference_frequency_mhz * t)
    rng = _generator(rng_seed)

    signals: Dict[AcquisitionKind, TimeSignal] = {}
    for acq, fid in fids.items():
        samples = fid * drift
        if noise_sigma > 0.0:
            scale = float(np.max(np.abs(fid)))
            samples = samples + _complex_noise(rng, noise_sigma, scale, synthesis.samples)
        signals[acq] = TimeSignal(
            samples=samples,
            bandwidth_hz=synthesis.bandwidth_hz,
            reference_frequency_mhz=synthesis.reference_frequency_mhz,
            carrier_ppm=synthesis.carrier_ppm,
        )
    return Sample(
        time_signals=signals,
        label={name: v / total for name, v in c.items()},
        concentrations=dict(c),
        noise_sigma=noise_sigma,
        basis_tag=basis.tag,
    )


def noise_plan(
    count: int, seed: int, noisy_fraction: float, sigma_max: float
) -> np.ndarray:
    """
    Per-sample noise sigma: exactly floor(noisy_fraction * count) samples get
    sigma in (0, sigma_max], chosen by a seeded permutation; the rest get 0.
    """
    if not 0.0 <= noisy_fraction <= 1.0:
        raise DatasetError(f"Noisy fraction must be in [0, 1], got {noisy_fraction}")
    sigmas = np.zeros(count, dtype=np.float64)
    noisy = int(np.floor(noisy_fraction * count))
    if noisy == 0:
        return sigmas
    chosen = _generator(seed).permutation(count)[:noisy]
    for index in chosen:
        rng = _generator((seed, int(index), SIGMA_STREAM))
        sigmas[index] = sigma_max * (1.0 - rng.random())
    return sigmas


def generate_dataset(
    bases: Sequence[BasisSet],
    count: int,
    seed: int,
    noisy_fraction: Optional[float] = None,
    split: Split = Split.TRAIN,
    sobol_start: int = 1,
    sigma_max: Optional[float] = None,
    metabolites: Optional[Sequence[str]] = None,
) -> Dataset:
    """
    Generate `count` labelled samples spread round-robin over `bases`.

    Concentrations come from the Sobol sequence starting at index
    `sobol_start`; noise sigma and noise draws are keyed on (seed, index).

    Raises:
        NoBasisError: If `bases` is empty.
    """
    if not bases:
        raise NoBasisError("Dataset generation needs at least one basis set")
    if count < 1:
        raise DatasetError(f"Dataset count must be at least 1, got {count}")

    noisy_fraction = config.NOISY_FRACTION if noisy_fraction is None else noisy_fraction
    sigma_max = config.NOISE_SIGMA_MAX if sigma_max is None else sigma_max
    metabolites = tuple(metabolites or bases[0].metabolites)

    vectors = concentration_vectors(metabolites, count, start=sobol_start)
    sigmas = noise_plan(count, seed, noisy_fraction, sigma_max)

    def _one(index: int) -> Sample:
        basis = bases[index % len(bases)]
        return synthesize_sample(basis, vectors[index], float(sigmas[index]), (seed, index))

    samples = parallel_map(_one, list(range(count)))
    SAMPLES_SYNTHESIZED.labels(split=split.value).inc(count)
    dataset = Dataset(
        samples=samples,
        basis_tag=",".join(b.tag for b in bases),
        seed=seed,
        split=split,
        metabolites=metabolites,
        window=bases[0].window,
    )
    log.info(
        "Dataset generated",
        count=count,
        seed=seed,
        split=split.value,
        noisy=int(np.count_nonzero(sigmas)),
        bases=len(bases),
    )
    return dataset
