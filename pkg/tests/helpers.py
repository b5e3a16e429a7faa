"""Shared builders for test signals."""

import numpy as np

from app.services.epoching import DEFAULT_FS_HZ, TeoaeSignal

FS = DEFAULT_FS_HZ


def make_signal(
    samples: np.ndarray,
    fs: float = FS,
    t_start: float = 0.0,
    noise_sd: np.ndarray | None = None,
) -> TeoaeSignal:
    """Signal with an explicit end time matching the sample count."""
    samples = np.asarray(samples, dtype=np.float64)
    return TeoaeSignal(
        samples=samples,
        fs=fs,
        t_start=t_start,
        t_end=t_start + samples.size * 1000.0 / fs,
        noise_sd=np.zeros_like(samples) if noise_sd is None else noise_sd,
    )


def delayed_impulse(delay_ms: float, length: int = 1024, fs: float = FS) -> TeoaeSignal:
    """Unit impulse at the sample nearest ``delay_ms``, from t = 0."""
    samples = np.zeros(length)
    samples[int(round(delay_ms * fs / 1000.0))] = 1.0
    return make_signal(samples, fs)
