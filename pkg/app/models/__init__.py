from app.models.cohort import (
    ENERGY_FEATURE,
    PC_FEATURES,
    EarRecord,
    FeatureVector,
    OutcomeEnum,
    SideEnum,
    Visit,
    gd_feature_name,
)

__all__ = [
    "ENERGY_FEATURE",
    "PC_FEATURES",
    "EarRecord",
    "FeatureVector",
    "OutcomeEnum",
    "SideEnum",
    "Visit",
    "gd_feature_name",
]
