"""
Pytest configuration and fixtures.

Provides synthetic epochs and a small on-disk cohort shared by the
pipeline tests.
"""

from pathlib import Path

import numpy as np
import pytest

from app.core.config import get_settings
from app.services.synth import CohortSpec, PacketSpec, synth_cohort, synth_packet, write_cohort
from tests.helpers import FS


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch: pytest.MonkeyPatch):
    """Fresh settings per test, unaffected by the caller's OAE_ environment."""
    monkeypatch.delenv("OAE_SEED", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def two_packet_epoch() -> np.ndarray:
    """One 25 ms epoch with packets at 1 kHz / 4.3 ms and 2 kHz / 3.5 ms."""
    packets = [
        PacketSpec(carrier_hz=1000.0, center_ms=4.3, sigma_ms=0.5, amplitude=2e-5),
        PacketSpec(carrier_hz=2000.0, center_ms=3.5, sigma_ms=0.5, amplitude=2e-5),
    ]
    return synth_packet(packets, FS, 25.0)


@pytest.fixture(scope="session")
def small_cohort_spec() -> CohortSpec:
    return CohortSpec(n_improved=5, n_nonimproved=5, n_epochs=20, seed=7, artefact_rate=0.05)


@pytest.fixture(scope="session")
def small_cohort_dir(tmp_path_factory: pytest.TempPathFactory, small_cohort_spec: CohortSpec) -> Path:
    """A written synthetic cohort: manifest.json, truth.json and epochs/*.csv."""
    out_dir = tmp_path_factory.mktemp("cohort")
    write_cohort(synth_cohort(small_cohort_spec), out_dir)
    return out_dir


@pytest.fixture(scope="session")
def study_sized_cohort_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Default group sizes and distributions (14 improved, 16 nonimproved) with short sessions."""
    out_dir = tmp_path_factory.mktemp("study_cohort")
    write_cohort(synth_cohort(CohortSpec(n_epochs=20)), out_dir)
    return out_dir
