from functools import lru_cache
from typing import Literal

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

class Settings(BaseSettings):

    model_config = SettingsConfigDict(
        env_prefix="OAE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    app_name: str = "TEOAE Prognosis"
    app_version: str = "0.1.0"
    debug: bool = False
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    # Acquisition
    sampling_rate_hz: float = 44100.0
    click_rate_hz: float = 10.0
    epoch_ms: float = 25.0
    calibration_pa_per_fs: float = 1.0

    # Denoising
    artefact_k: float = 2.0
    window_start_ms: float = 2.5
    window_end_ms: float = 20.0

    # Spectral features
    nfft: int = 8192
    gd_band_hz: float = 100.0
    gd_frequencies: str = "1000,2000"
    snr_margin_db: float = 3.0

    # PCA
    pca_components: int = 3

    # SVM
    svm_tolerance: float = 1e-3
    svm_max_iter: int = 100_000
    sigmoid_coef0: float = 0.0
    grid_log2_min: float = -6.0
    grid_log2_max: float = 6.0
    grid_log2_step: float = 0.1
    cv_folds: int = 5
    cv_stratified: bool = True
    n_jobs: int = 1

    # Study
    follow_up_limit_days: int = 200
    include_contralateral: bool = False
    seed: int | None = None

    @field_validator("gd_frequencies")
    @classmethod
    def _check_gd_frequencies(cls, value: str) -> str:
        for part in value.split(","):
            if float(part.strip()) <= 0:
                raise ValueError("GD frequencies must be positive")
        return value

    def get_gd_frequencies(self) -> list[float]:

        return [float(part.strip()) for part in self.gd_frequencies.split(",") if part.strip()]

@lru_cache
def get_settings() -> Settings:

    return Settings()
