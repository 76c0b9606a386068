import numpy as np
import pytest

from src.application.basis_service import build_basis, load_definitions
from src.application.dataset_service import generate_dataset
from src.application.nn.network import build_network
from src.domain.models import InputConfig, NetworkConfig, PpmWindow, Split

SMALL_BINS = 512
SYNTH_SAMPLES = 4096
SYNTH_BANDWIDTH_HZ = 2000.0


@pytest.fixture(scope="session")
def window() -> PpmWindow:
    return PpmWindow(high_ppm=4.5, low_ppm=1.5, bins=SMALL_BINS)


@pytest.fixture(scope="session")
def models():
    return load_definitions()


@pytest.fixture(scope="session")
def basis(models, window):
    return build_basis(
        models, [1.0], window, samples=SYNTH_SAMPLES, bandwidth_hz=SYNTH_BANDWIDTH_HZ
    )[0]


@pytest.fixture(scope="session")
def input_cfg(window) -> InputConfig:
    return InputConfig(window=window)


@pytest.fixture(scope="session")
def train_set(basis):
    return generate_dataset([basis], 24, seed=11, split=Split.TRAIN)


@pytest.fixture(scope="session")
def val_set(basis):
    return generate_dataset(
        [basis], 8, seed=12, split=Split.VALIDATION, sobol_start=25
    )


@pytest.fixture
def tiny_config() -> NetworkConfig:
    return NetworkConfig(input_rows=2, input_cols=SMALL_BINS, channel_scale=1 / 64)


@pytest.fixture
def tiny_net(tiny_config, input_cfg):
    return build_network(tiny_config, seed=3, input_config=input_cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
