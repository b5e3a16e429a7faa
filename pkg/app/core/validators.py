import math
from dataclasses import dataclass
from typing import Union

@dataclass
class ValidationResult:


    is_valid: bool
    error_message: str | None = None
    sanitized_value: Union[int, float, tuple[float, float], None] = None

PTA_MIN_DB_HL = -10.0
PTA_MAX_DB_HL = 120.0
PTA_FREQUENCIES_HZ = (500, 1000, 2000, 3000)
IMPROVEMENT_THRESHOLD_DB = 15.0

SAMPLING_RATE_MIN_HZ = 8000.0
SAMPLING_RATE_MAX_HZ = 384000.0

REFERENCE_PRESSURE_PA = 20e-6

def validate_pta_threshold(threshold: Union[int, float, str]) -> ValidationResult:

    try:
        value = float(threshold)
    except (TypeError, ValueError):
        return ValidationResult(
            is_valid=False,
            error_message="Threshold must be a valid number"
        )

    if not math.isfinite(value):
        return ValidationResult(
            is_valid=False,
            error_message="Threshold must be finite"
        )

    if value < PTA_MIN_DB_HL or value > PTA_MAX_DB_HL:
        return ValidationResult(
            is_valid=False,
            error_message=f"Threshold must be between {PTA_MIN_DB_HL:g} and {PTA_MAX_DB_HL:g} dB HL"
        )

    return ValidationResult(is_valid=True, sanitized_value=value)

def validate_sampling_rate(fs: Union[int, float, str]) -> ValidationResult:
    """
    Validate a sampling rate.

    Any positive rate inside the audio range is accepted; 44.1 kHz is only
    the acquisition default.

    Args:
        fs: Sampling rate in Hz

    Returns:
        ValidationResult with the rate as float when valid
    """
    try:
        value = float(fs)
    except (TypeError, ValueError):
        return ValidationResult(
            is_valid=False,
            error_message="Sampling rate must be a valid number"
        )

    if not math.isfinite(value) or value <= 0:
        return ValidationResult(
            is_valid=False,
            error_message="Sampling rate must be positive"
        )

    if value < SAMPLING_RATE_MIN_HZ or value > SAMPLING_RATE_MAX_HZ:
        return ValidationResult(
            is_valid=False,
            error_message=(
                f"Sampling rate must be between {SAMPLING_RATE_MIN_HZ:g} "
                f"and {SAMPLING_RATE_MAX_HZ:g} Hz"
            )
        )

    return ValidationResult(is_valid=True, sanitized_value=value)

def validate_window(t_start: float, t_end: float) -> ValidationResult:

    if not (math.isfinite(t_start) and math.isfinite(t_end)):
        return ValidationResult(
            is_valid=False,
            error_message="Window bounds must be finite"
        )

    if t_start >= t_end:
        return ValidationResult(
            is_valid=False,
            error_message="Window start must be earlier than window end"
        )

    return ValidationResult(is_valid=True, sanitized_value=(float(t_start), float(t_end)))

def validate_nfft(nfft: int, signal_length: int) -> ValidationResult:
    """
    Validate a transform length against a signal length.

    Args:
        nfft: Transform length, must be a power of two
        signal_length: Number of samples to be zero-padded

    Returns:
        ValidationResult with nfft as int when valid
    """
    if nfft < 1 or nfft & (nfft - 1):
        return ValidationResult(
            is_valid=False,
            error_message=f"nfft must be a power of two, got {nfft}"
        )

    if nfft < signal_length:
        return ValidationResult(
            is_valid=False,
            error_message=f"nfft {nfft} is shorter than the signal ({signal_length} samples)"
        )

    return ValidationResult(is_valid=True, sanitized_value=int(nfft))

def validate_gd_frequency(frequency: float, fs: float) -> ValidationResult:

    if not math.isfinite(frequency) or frequency <= 0:
        return ValidationResult(
            is_valid=False,
            error_message="GD frequency must be positive"
        )

    if frequency >= fs / 2:
        return ValidationResult(
            is_valid=False,
            error_message=f"GD frequency must be below Nyquist ({fs / 2:g} Hz)"
        )

    return ValidationResult(is_valid=True, sanitized_value=float(frequency))

def validate_rejection_factor(k: float) -> ValidationResult:

    if not math.isfinite(k) or k <= 0:
        return ValidationResult(
            is_valid=False,
            error_message="Rejection factor must be positive"
        )

    return ValidationResult(is_valid=True, sanitized_value=float(k))

def ms_to_samples(duration_ms: float, fs: float) -> int:
    """Convert milliseconds to a sample count, rounding halves up."""
    return int(math.floor(duration_ms * fs / 1000.0 + 0.5))
