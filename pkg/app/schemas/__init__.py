from app.schemas.common import BaseSchema, ErrorDetail, ErrorResponse
from app.schemas.manifest import (
    MANIFEST_VERSION,
    EarSchema,
    ManifestSchema,
    PatientSchema,
    VisitSchema,
)
from app.schemas.report import (
    CvRowSchema,
    ExclusionSchema,
    StudyReportSchema,
    WelchRowSchema,
)
from app.schemas.study import DEFAULT_FEATURE_SETS, StudyConfigSchema

__all__ = [
    "BaseSchema",
    "ErrorDetail",
    "ErrorResponse",
    "MANIFEST_VERSION",
    "EarSchema",
    "ManifestSchema",
    "PatientSchema",
    "VisitSchema",
    "CvRowSchema",
    "ExclusionSchema",
    "StudyReportSchema",
    "WelchRowSchema",
    "DEFAULT_FEATURE_SETS",
    "StudyConfigSchema",
]
