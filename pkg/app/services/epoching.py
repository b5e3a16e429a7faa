"""Click-response epoching, artefact rejection and median denoising."""
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from app.core.exceptions import InputError, NumericalError
from app.core.validators import (
    ms_to_samples,
    validate_rejection_factor,
    validate_sampling_rate,
    validate_window,
)

logger = logging.getLogger(__name__)

DEFAULT_FS_HZ = 44100.0
DEFAULT_WINDOW_MS = (2.5, 20.0)
DEFAULT_REJECTION_K = 2.0
MEDIAN_EFFICIENCY = 2.0 / math.pi

FloatArray = npt.NDArray[np.float64]


class EpochingError(InputError):
    code = "epoching-error"


class StreamTooShortError(EpochingError):
    code = "stream-too-short"


class OverlappingEpochsError(EpochingError):
    code = "overlapping-epochs"


class WindowOutOfRangeError(EpochingError):
    code = "window-out-of-range"


class InsufficientEpochsError(EpochingError):
    code = "insufficient-epochs"


class AllEpochsRejectedError(NumericalError):
    code = "all-epochs-rejected"


def _frozen(values: npt.ArrayLike, ndim: int) -> FloatArray:
    array = np.array(values, dtype=np.float64, copy=True)
    if array.ndim != ndim:
        raise EpochingError(f"Expected a {ndim}-D array, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ClickEpochSet:
    """Raw click-response epochs (Pa), one row per click, aligned to the click."""

    epochs: FloatArray
    fs: float = DEFAULT_FS_HZ
    click_onset: int = 0
    session_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "epochs", _frozen(self.epochs, 2))
        fs_result = validate_sampling_rate(self.fs)
        if not fs_result.is_valid:
            raise EpochingError(fs_result.error_message or "Invalid sampling rate")
        object.__setattr__(self, "fs", float(fs_result.sanitized_value))  # type: ignore[arg-type]
        if self.epochs.shape[0] < 1 or self.epochs.shape[1] < 1:
            raise InsufficientEpochsError("An epoch set needs at least one non-empty epoch")
        if not 0 <= self.click_onset < self.epochs.shape[1]:
            raise EpochingError(
                f"Click onset {self.click_onset} outside epoch of {self.epochs.shape[1]} samples"
            )

    @property
    def n_epochs(self) -> int:
        return int(self.epochs.shape[0])

    @property
    def epoch_len(self) -> int:
        return int(self.epochs.shape[1])

    @property
    def duration_ms(self) -> float:
        return self.epoch_len * 1000.0 / self.fs

    def subset(self, keep: npt.NDArray[np.bool_]) -> "ClickEpochSet":

        return replace(self, epochs=self.epochs[keep])


@dataclass(frozen=True)
class TeoaeSignal:
    """
    One denoised emission waveform with its per-sample noise SD.

    ``t_start`` and ``t_end`` are in ms relative to click onset; a signal
    straight out of the median stage starts at the first epoch sample.
    """

    samples: FloatArray
    fs: float = DEFAULT_FS_HZ
    t_start: float = 0.0
    t_end: float = 0.0
    noise_sd: FloatArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", _frozen(self.samples, 1))
        noise = np.asarray(self.noise_sd, dtype=np.float64)
        if noise.size == 0:
            noise = np.zeros_like(self.samples)
        if noise.shape != self.samples.shape:
            raise EpochingError("Noise SD must match the signal length")
        if np.any(noise < 0):
            raise EpochingError("Noise SD must be non-negative")
        object.__setattr__(self, "noise_sd", _frozen(noise, 1))
        if self.t_end <= self.t_start:
            object.__setattr__(
                self, "t_end", self.t_start + self.samples.size * 1000.0 / self.fs
            )

    @property
    def length(self) -> int:
        return int(self.samples.size)

    @property
    def first_sample_ms(self) -> float:
        """Exact time of ``samples[0]`` after rounding the window start to a sample."""
        return ms_to_samples(self.t_start, self.fs) * 1000.0 / self.fs

    @property
    def times_ms(self) -> FloatArray:
        return self.first_sample_ms + np.arange(self.length) * 1000.0 / self.fs

    def scaled(self, factor: float) -> "TeoaeSignal":

        return replace(
            self,
            samples=self.samples * factor,
            noise_sd=self.noise_sd * abs(factor),
        )


def click_schedule(
    n_clicks: int,
    click_rate: float,
    fs: float = DEFAULT_FS_HZ,
    first_click: int = 0,
) -> npt.NDArray[np.int64]:
    """Onset sample of every click for a constant click rate."""
    if n_clicks < 1:
        raise EpochingError("A schedule needs at least one click")
    if click_rate <= 0:
        raise EpochingError("Click rate must be positive")
    offsets = np.floor(np.arange(n_clicks) * fs / click_rate + 0.5).astype(np.int64)
    return first_click + offsets


def segment_epochs(
    stream: npt.ArrayLike,
    schedule: Sequence[int] | npt.NDArray[np.int64],
    epoch_len: int,
    fs: float = DEFAULT_FS_HZ,
    session_id: str = "",
) -> ClickEpochSet:
    """
    Cut a continuous recording into click-aligned epochs.

    Args:
        stream: Continuous pressure samples (Pa)
        schedule: Sample index of every click onset, increasing
        epoch_len: Samples per epoch, starting at the click onset
        fs: Sampling rate in Hz
        session_id: Opaque identifier carried into the epoch set

    Returns:
        ClickEpochSet with one epoch per scheduled click

    Raises:
        OverlappingEpochsError: click period shorter than the epoch
        StreamTooShortError: the last epoch would run past the stream
    """
    samples = np.asarray(stream, dtype=np.float64)
    onsets = np.asarray(schedule, dtype=np.int64)
    if samples.ndim != 1:
        raise EpochingError("Stream must be one-dimensional")
    if onsets.size == 0:
        raise EpochingError("Click schedule is empty")
    if epoch_len < 1:
        raise EpochingError("Epoch length must be positive")
    if onsets[0] < 0:
        raise EpochingError("Click onsets must be non-negative")

    periods = np.diff(onsets)
    if periods.size and periods.min() < epoch_len:
        raise OverlappingEpochsError(
            f"Click period of {int(periods.min())} samples is shorter than the "
            f"{epoch_len}-sample epoch"
        )

    needed = int(onsets[-1]) + epoch_len
    if needed > samples.size:
        raise StreamTooShortError(
            f"Stream holds {samples.size} samples but the schedule needs {needed}"
        )

    index = onsets[:, None] + np.arange(epoch_len)[None, :]
    return ClickEpochSet(epochs=samples[index], fs=fs, click_onset=0, session_id=session_id)


def epoch_rms(es: ClickEpochSet) -> FloatArray:

    return np.sqrt(np.mean(np.square(es.epochs), axis=1))


def artefact_mask(es: ClickEpochSet, k: float = DEFAULT_REJECTION_K) -> npt.NDArray[np.bool_]:
    """
    Keep-mask of the RMS rule ``rms <= k * median(rms)``.

    The rule is re-applied to the survivors until nothing else drops out,
    so the returned set is a fixed point of the rule.
    """
    k_result = validate_rejection_factor(k)
    if not k_result.is_valid:
        raise EpochingError(k_result.error_message or "Invalid rejection factor")
    if es.n_epochs < 3:
        raise InsufficientEpochsError(
            f"Artefact rejection needs at least 3 epochs, got {es.n_epochs}"
        )

    rms = epoch_rms(es)
    keep = np.ones(es.n_epochs, dtype=bool)
    while True:
        if not keep.any():
            break
        limit = k * np.median(rms[keep])
        next_keep = keep & (rms <= limit)
        if np.array_equal(next_keep, keep):
            break
        keep = next_keep
    return keep


def reject_artefacts(es: ClickEpochSet, k: float = DEFAULT_REJECTION_K) -> ClickEpochSet:

    keep = artefact_mask(es, k)
    n_kept = int(keep.sum())
    if n_kept == 0:
        raise AllEpochsRejectedError(
            f"All {es.n_epochs} epochs of session '{es.session_id}' were rejected"
        )
    if n_kept < es.n_epochs:
        logger.info(
            f"Rejected {es.n_epochs - n_kept} of {es.n_epochs} epochs "
            f"in session '{es.session_id}' (k={k:g})"
        )
    return es.subset(keep)


def estimate_noise_sd(es: ClickEpochSet) -> FloatArray:
    """
    Per-sample standard error of the samplewise median.

    Samplewise SD across epochs divided by ``sqrt(n * 2 / pi)``, the
    asymptotic efficiency of the median for Gaussian noise.
    """
    if es.n_epochs < 2:
        raise InsufficientEpochsError("Noise estimation needs at least 2 epochs")
    sd = np.std(es.epochs, axis=0, ddof=1)
    return sd / np.sqrt(es.n_epochs * MEDIAN_EFFICIENCY)


def median_denoise(es: ClickEpochSet) -> TeoaeSignal:

    samples = np.median(es.epochs, axis=0)
    if es.n_epochs >= 2:
        noise_sd = estimate_noise_sd(es)
    else:
        logger.warning(f"Session '{es.session_id}' has a single epoch; noise SD set to zero")
        noise_sd = np.zeros(es.epoch_len)
    t_start = -es.click_onset * 1000.0 / es.fs
    return TeoaeSignal(
        samples=samples,
        fs=es.fs,
        t_start=t_start,
        t_end=t_start + es.duration_ms,
        noise_sd=noise_sd,
    )


def apply_window(sig: TeoaeSignal, t_start: float, t_end: float) -> TeoaeSignal:
    """
    Rectangular extraction of ``[t_start, t_end)`` ms after click onset.

    Raises:
        WindowOutOfRangeError: the window is empty or leaves the signal
    """
    window_result = validate_window(t_start, t_end)
    if not window_result.is_valid:
        raise WindowOutOfRangeError(window_result.error_message or "Invalid window")

    first = ms_to_samples(t_start, sig.fs) - ms_to_samples(sig.t_start, sig.fs)
    length = ms_to_samples(t_end - t_start, sig.fs)
    if first < 0 or length < 1 or first + length > sig.length:
        raise WindowOutOfRangeError(
            f"Window [{t_start:g}, {t_end:g}) ms does not fit a signal covering "
            f"[{sig.t_start:g}, {sig.t_end:g}) ms"
        )

    return TeoaeSignal(
        samples=sig.samples[first:first + length],
        fs=sig.fs,
        t_start=float(t_start),
        t_end=float(t_end),
        noise_sd=sig.noise_sd[first:first + length],
    )


def extract_signal(
    es: ClickEpochSet,
    k: float = DEFAULT_REJECTION_K,
    window: tuple[float, float] = DEFAULT_WINDOW_MS,
    reject: bool = True,
) -> TeoaeSignal:
    """Reject artefacts, take the samplewise median and cut the analysis window."""
    cleaned = reject_artefacts(es, k) if reject else es
    return apply_window(median_denoise(cleaned), *window)
