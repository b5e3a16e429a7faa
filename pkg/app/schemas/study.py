from pydantic import Field, field_validator, model_validator

from app.core.config import Settings
from app.core.validators import validate_window
from app.models.cohort import ENERGY_FEATURE, PC_FEATURES, gd_feature_name
from app.schemas.common import BaseSchema

DEFAULT_FEATURE_SETS: list[list[str]] = [
    list(PC_FEATURES),
    [ENERGY_FEATURE],
    ["gd1k"],
    ["gd2k"],
]


class StudyConfigSchema(BaseSchema):
    """Parameters of one study run; defaults come from ``Settings``."""

    window_ms: tuple[float, float] = (2.5, 20.0)
    artefact_k: float = Field(default=2.0, gt=0)
    reject_artefacts: bool = True
    gd_frequencies_hz: list[float] = Field(default_factory=lambda: [1000.0, 2000.0])
    gd_band_hz: float = Field(default=100.0, gt=0)
    snr_margin_db: float = 3.0
    nfft: int = Field(default=8192, ge=1)
    pca_components: int = Field(default=3, ge=3)
    grid_log2_min: float = -6.0
    grid_log2_max: float = 6.0
    grid_log2_step: float = Field(default=0.1, gt=0)
    coef0: float = 0.0
    k: int = Field(default=5, ge=2)
    stratified: bool = True
    svm_tolerance: float = Field(default=1e-3, gt=0)
    svm_max_iter: int = Field(default=100_000, ge=1)
    n_jobs: int = 1
    feature_sets: list[list[str]] = Field(default_factory=lambda: [list(s) for s in DEFAULT_FEATURE_SETS])
    follow_up_limit_days: int = Field(default=200, ge=1)
    include_contralateral: bool = False
    seed: int | None = None

    @field_validator("window_ms")
    @classmethod
    def validate_window_bounds(cls, value: tuple[float, float]) -> tuple[float, float]:

        result = validate_window(*value)
        if not result.is_valid:
            raise ValueError(result.error_message)
        return value

    @field_validator("nfft")
    @classmethod
    def validate_power_of_two(cls, value: int) -> int:

        if value & (value - 1):
            raise ValueError("nfft must be a power of two")
        return value

    @field_validator("gd_frequencies_hz")
    @classmethod
    def validate_gd_frequencies(cls, value: list[float]) -> list[float]:

        if any(f <= 0 for f in value):
            raise ValueError("GD frequencies must be positive")
        return value

    @model_validator(mode="after")
    def validate_feature_sets(self) -> "StudyConfigSchema":

        if self.grid_log2_max < self.grid_log2_min:
            raise ValueError("grid_log2_max must not be below grid_log2_min")
        known = self.known_features()
        for feature_set in self.feature_sets:
            if not feature_set:
                raise ValueError("Feature sets must not be empty")
            unknown = [name for name in feature_set if name not in known]
            if unknown:
                raise ValueError(f"Unknown features {unknown}; available: {known}")
        return self

    def known_features(self) -> list[str]:

        return [*PC_FEATURES, ENERGY_FEATURE, *self.gd_feature_names()]

    def gd_feature_names(self) -> list[str]:
        return [gd_feature_name(f) for f in self.gd_frequencies_hz]

    @classmethod
    def from_settings(cls, settings: Settings) -> "StudyConfigSchema":

        return cls(
            window_ms=(settings.window_start_ms, settings.window_end_ms),
            artefact_k=settings.artefact_k,
            gd_frequencies_hz=settings.get_gd_frequencies(),
            gd_band_hz=settings.gd_band_hz,
            snr_margin_db=settings.snr_margin_db,
            nfft=settings.nfft,
            pca_components=settings.pca_components,
            grid_log2_min=settings.grid_log2_min,
            grid_log2_max=settings.grid_log2_max,
            grid_log2_step=settings.grid_log2_step,
            coef0=settings.sigmoid_coef0,
            k=settings.cv_folds,
            stratified=settings.cv_stratified,
            svm_tolerance=settings.svm_tolerance,
            svm_max_iter=settings.svm_max_iter,
            n_jobs=settings.n_jobs,
            follow_up_limit_days=settings.follow_up_limit_days,
            include_contralateral=settings.include_contralateral,
            seed=settings.seed,
        )
