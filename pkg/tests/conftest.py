"""
Shared fixtures for the test suite
Seeded generators, modulation configs and small experiment specs
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Make the flat top-level packages importable when pytest runs from anywhere
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from components.channel import CeemConfig  # noqa: E402
from components.lora_modem import ModulationConfig  # noqa: E402
from utils.mc_engine import ExperimentSpec  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg7():
    return ModulationConfig(7)


@pytest.fixture
def g2_spec():
    """Small G2 2x1 perfect-CSI curve at SF=7."""
    return ExperimentSpec(
        modulation=ModulationConfig(7),
        code_name="G2",
        n=1,
        ceem=CeemConfig.perfect(),
        snr_db=(-12.0, -8.0),
        min_bit_errors=50,
        max_blocks=400,
        seed=7,
    )


@pytest.fixture
def manifest_dir(tmp_path, monkeypatch):
    """Empty working directory with no STBC_LORA_* variables set."""
    for name in ("STBC_LORA_WORKERS", "STBC_LORA_SEED", "STBC_LORA_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_manifest(directory, name, text):
    path = Path(directory) / name
    path.write_text(text)
    return path
