"""
Shared fixtures: tiny configs and a small generated dataset.
"""
import pytest

from src.segmodel import SegModelConfig
from src.synthdata.dataset import generate_dataset
from src.synthdata.generator import GeneratorConfig, SplitSizes
from src.synthdata.labeler import BinScheme, LabelerConfig
from tests.helpers import TINY_SIDE

TWO_BINS = BinScheme(edges=(0.0, 0.5, 1.0))


@pytest.fixture(autouse=True)
def quiet_logging(mocker):
    """Command entry points must not install handlers or write log files under test."""
    return mocker.patch("src.utils.cli.setup_logging")


@pytest.fixture
def two_bins() -> BinScheme:
    return TWO_BINS


@pytest.fixture
def tiny_model_cfg() -> SegModelConfig:
    return SegModelConfig(input_side=TINY_SIDE, input_channels=3, base_width=2, depth=1)


@pytest.fixture
def tiny_generator() -> GeneratorConfig:
    return GeneratorConfig(side=TINY_SIDE, blob_sigma=1.5, splits=SplitSizes(train=60, val=8, test=8))


@pytest.fixture
def tiny_dataset(tiny_generator):
    return generate_dataset(tiny_generator, LabelerConfig(), TWO_BINS, seed=3)
