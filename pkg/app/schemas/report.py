from pydantic import Field

from app.schemas.common import BaseSchema
from app.schemas.study import StudyConfigSchema


class WelchRowSchema(BaseSchema):
    """One group-comparison row: improved (A) against nonimproved (B)."""

    parameter: str
    t: float
    df: float
    p: float
    mean_improved: float
    sd_improved: float
    n_improved: int
    mean_nonimproved: float
    sd_nonimproved: float
    n_nonimproved: int


class CvRowSchema(BaseSchema):

    parameters: list[str]
    accuracy_pct: float
    c: float
    gamma: float
    fold_accuracies: list[float] = Field(default_factory=list)
    n_rows: int = 0
    model_file: str | None = None
    cv_file: str | None = None


class ExclusionSchema(BaseSchema):

    ear_id: str
    reason: str
    message: str = ""


class StudyReportSchema(BaseSchema):
    """Group statistics, cross-validated accuracies and exclusions of one run."""

    n_ears: int
    n_improved: int
    n_nonimproved: int
    seed: int | None = None
    welch: list[WelchRowSchema] = Field(default_factory=list)
    welch_failures: dict[str, str] = Field(default_factory=dict)
    cv: list[CvRowSchema] = Field(default_factory=list)
    cv_failures: dict[str, str] = Field(default_factory=dict)
    exclusions: list[ExclusionSchema] = Field(default_factory=list)
    pca_failure: str | None = None
    pca_explained_variance: list[float] = Field(default_factory=list)
    config: StudyConfigSchema
