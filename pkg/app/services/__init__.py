from app.services.epoching import (
    ClickEpochSet,
    TeoaeSignal,
    apply_window,
    extract_signal,
    median_denoise,
    reject_artefacts,
    segment_epochs,
)
from app.services.spectral import (
    Spectrum,
    energy,
    group_delay_at,
    group_delays,
    spectrum,
)
from app.services.pca import PcaModel, PcPoint, fit_pca, project
from app.services.stats import WelchResult, welch_t, welch_t_from_summary

__all__ = [
    "ClickEpochSet",
    "TeoaeSignal",
    "apply_window",
    "extract_signal",
    "median_denoise",
    "reject_artefacts",
    "segment_epochs",
    "Spectrum",
    "energy",
    "group_delay_at",
    "group_delays",
    "spectrum",
    "PcaModel",
    "PcPoint",
    "fit_pca",
    "project",
    "WelchResult",
    "welch_t",
    "welch_t_from_summary",
]
