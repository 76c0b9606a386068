"""
Predictors that turn samples into relative concentration vectors: the trained
network and the NNLS baseline share one interface so evaluation and serving
can use either.
"""

import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.application.fitting_service import design_matrix, fit_sample
from src.application.nn.network import Network
from src.application.preprocessing import assemble_input
from src.config.logger_config import log
from src.core.exceptions import NoBasisError, QuantError, UsageError
from src.domain.models import InputConfig
from src.domain.spectra import BasisSet, ConcentrationVector, Sample
from src.infrastructure.workers import parallel_map
from shared.libs.observability.metrics import QUANTIFICATIONS, QUANTIFY_LATENCY


class NetworkQuantifier:
    """Pre-process a sample with the network's input config and run inference."""

    def __init__(
        self,
        net: Network,
        input_cfg: Optional[InputConfig] = None,
        name: str = "network",
    ):
        input_cfg = input_cfg or net.input_config
        if input_cfg is None:
            raise UsageError("Network has no stored input config; pass one explicitly")
        self.net = net
        self.input_cfg = input_cfg
        self.name = name

    @property
    def metabolites(self) -> Tuple[str, ...]:
        return self.net.metabolites

    def quantify(self, sample: Sample) -> ConcentrationVector:
        started = time.perf_counter()
        try:
            result = self.net.predict(assemble_input(sample, self.input_cfg))
        except QuantError:
            QUANTIFICATIONS.labels(predictor=self.name, status="error").inc()
            raise
        QUANTIFY_LATENCY.labels(predictor=self.name).observe(time.perf_counter() - started)
        QUANTIFICATIONS.labels(predictor=self.name, status="ok").inc()
        return result

    def quantify_many(self, samples: Sequence[Sample]) -> np.ndarray:
        started = time.perf_counter()
        inputs = parallel_map(lambda s: assemble_input(s, self.input_cfg).data, list(samples))
        predicted = self.net.predict_batch(np.stack(inputs))
        elapsed = time.perf_counter() - started
        QUANTIFY_LATENCY.labels(predictor=self.name).observe(elapsed / max(len(samples), 1))
        QUANTIFICATIONS.labels(predictor=self.name, status="ok").inc(len(samples))
        log.debug("Batch quantified", predictor=self.name, count=len(samples), seconds=elapsed)
        return predicted


class NnlsQuantifier:
    """
    Fit each sample with non-negative least squares against the basis set it
    was synthesised from (matched on `basis_tag`); samples without a matching
    tag, such as scans, use the first basis. Design matrices are built once per
    basis.
    """

    def __init__(
        self,
        bases: Union[BasisSet, Sequence[BasisSet]],
        input_cfg: InputConfig,
        name: str = "nnls",
    ):
        bases = [bases] if isinstance(bases, BasisSet) else list(bases)
        if not bases:
            raise NoBasisError("NNLS baseline needs at least one basis set")
        metabolites = tuple(bases[0].metabolites)
        if any(tuple(b.metabolites) != metabolites for b in bases):
            raise UsageError("Basis sets of one NNLS baseline must list the same metabolites")
        self.bases: Dict[str, BasisSet] = {b.tag: b for b in bases}
        self.default = bases[0]
        self.input_cfg = input_cfg
        self.name = name
        self._designs: Dict[str, np.ndarray] = {
            tag: design_matrix(b, input_cfg) for tag, b in self.bases.items()
        }
        log.debug("NNLS baseline ready", predictor=name, bases=list(self.bases))

    @property
    def metabolites(self) -> Tuple[str, ...]:
        return tuple(self.default.metabolites)

    def basis_for(self, sample: Sample) -> BasisSet:
        return self.bases.get(sample.basis_tag, self.default)

    def quantify(self, sample: Sample) -> ConcentrationVector:
        started = time.perf_counter()
        basis = self.basis_for(sample)
        try:
            fit = fit_sample(sample, basis, self.input_cfg, design=self._designs[basis.tag])
        except QuantError:
            QUANTIFICATIONS.labels(predictor=self.name, status="error").inc()
            raise
        QUANTIFY_LATENCY.labels(predictor=self.name).observe(time.perf_counter() - started)
        QUANTIFICATIONS.labels(predictor=self.name, status="ok").inc()
        return fit.concentrations

    def quantify_many(self, samples: Sequence[Sample]) -> np.ndarray:
        vectors: List[ConcentrationVector] = parallel_map(self.quantify, list(samples))
        return np.array([[v[m] for m in self.metabolites] for v in vectors], dtype=np.float64)
