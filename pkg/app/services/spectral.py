"""Signal energy, spectra and phase-gradient group delay."""
import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy import fft

from app.core.exceptions import InputError, NumericalError
from app.core.validators import (
    REFERENCE_PRESSURE_PA,
    validate_nfft,
    validate_gd_frequency,
)
from app.services.epoching import FloatArray, TeoaeSignal

logger = logging.getLogger(__name__)

DEFAULT_NFFT = 8192
DEFAULT_BAND_HALFWIDTH_HZ = 100.0
DEFAULT_SNR_MARGIN_DB = 3.0


class SpectralError(InputError):
    code = "spectral-error"


class NfftTooSmallError(SpectralError):
    code = "nfft-too-small"


class InsufficientSnrError(NumericalError):
    code = "insufficient-snr"


@dataclass(frozen=True)
class Spectrum:
    """One-sided DFT of a zero-padded signal with its unwrapped phase."""

    freqs: FloatArray
    complex_values: npt.NDArray[np.complex128]
    nfft: int
    phase_unwrapped: FloatArray
    fs: float
    noise_power: float = 0.0

    @property
    def magnitude(self) -> FloatArray:
        return np.abs(self.complex_values)


@dataclass(frozen=True)
class SpectralFeatures:

    energy: float
    gd: dict[float, float | None] = field(default_factory=dict)


def energy(sig: TeoaeSignal) -> float:
    """Sum of squared samples over the signal's window (Pa^2)."""
    return float(np.sum(np.square(sig.samples)))


def spectrum(sig: TeoaeSignal, nfft: int = DEFAULT_NFFT) -> Spectrum:
    """
    Zero-padded DFT of the windowed samples.

    Phase is unwrapped from DC upward, so for a real signal it starts at
    0 or pi and every bin-to-bin step lies in (-pi, pi].

    Raises:
        NfftTooSmallError: nfft is not a power of two or shorter than the signal
    """
    nfft_result = validate_nfft(nfft, sig.length)
    if not nfft_result.is_valid:
        raise NfftTooSmallError(nfft_result.error_message or "Invalid nfft")

    values = fft.rfft(sig.samples, n=nfft)
    freqs = fft.rfftfreq(nfft, d=1.0 / sig.fs)
    phase = np.unwrap(np.angle(values))
    return Spectrum(
        freqs=freqs,
        complex_values=values,
        nfft=nfft,
        phase_unwrapped=phase,
        fs=sig.fs,
        noise_power=float(np.sum(np.square(sig.noise_sd))),
    )


def spectral_energy(spec: Spectrum) -> float:
    """(1/nfft) * sum |X|^2 over the full two-sided spectrum."""
    power = np.square(np.abs(spec.complex_values))
    weights = np.full(power.size, 2.0)
    weights[0] = 1.0
    if spec.nfft % 2 == 0:
        weights[-1] = 1.0
    return float(np.sum(weights * power) / spec.nfft)


def _band(spec: Spectrum, frequency: float, band_halfwidth: float) -> npt.NDArray[np.bool_]:
    return (spec.freqs >= frequency - band_halfwidth) & (spec.freqs <= frequency + band_halfwidth)


def band_snr_db(spec: Spectrum, frequency: float, band_halfwidth: float) -> float:
    """Mean band power over the noise power projected into one bin, in dB."""
    band_power = float(np.mean(np.square(spec.magnitude[_band(spec, frequency, band_halfwidth)])))
    if band_power <= np.finfo(np.float64).tiny:
        return -math.inf
    if spec.noise_power <= 0.0:
        return math.inf
    return 10.0 * math.log10(band_power / spec.noise_power)


def group_delay_from_spectrum(
    spec: Spectrum,
    frequency: float,
    band_halfwidth: float = DEFAULT_BAND_HALFWIDTH_HZ,
    snr_margin_db: float = DEFAULT_SNR_MARGIN_DB,
    origin_ms: float = 0.0,
) -> float:

    freq_result = validate_gd_frequency(frequency, spec.fs)
    if not freq_result.is_valid:
        raise SpectralError(freq_result.error_message or "Invalid GD frequency")

    band = _band(spec, frequency, band_halfwidth)
    if int(band.sum()) < 2:
        raise SpectralError(
            f"Band of +/-{band_halfwidth:g} Hz around {frequency:g} Hz holds fewer than 2 bins"
        )

    snr_db = band_snr_db(spec, frequency, band_halfwidth)
    if snr_db < snr_margin_db:
        raise InsufficientSnrError(
            f"Band SNR at {frequency:g} Hz is {snr_db:.1f} dB, below {snr_margin_db:g} dB",
            frequency=frequency,
        )

    slope, _ = np.polyfit(spec.freqs[band], spec.phase_unwrapped[band], 1)
    return float(-slope / (2.0 * math.pi) * 1000.0 + origin_ms)


def group_delay_at(
    sig: TeoaeSignal,
    frequency: float,
    band_halfwidth: float = DEFAULT_BAND_HALFWIDTH_HZ,
    nfft: int = DEFAULT_NFFT,
    snr_margin_db: float = DEFAULT_SNR_MARGIN_DB,
) -> float:
    """
    Group delay in ms after click onset at one GD frequency.

    The slope of the unwrapped phase is a least-squares line over the bins
    within ``frequency +/- band_halfwidth``; the window offset is added back.

    Args:
        sig: Windowed emission
        frequency: GD frequency in Hz, below Nyquist
        band_halfwidth: Half width of the regression band in Hz
        nfft: Transform length
        snr_margin_db: Required band power over the projected noise floor

    Returns:
        Group delay in ms

    Raises:
        InsufficientSnrError: band power does not clear the noise floor
    """
    spec = spectrum(sig, nfft)
    return group_delay_from_spectrum(
        spec,
        frequency,
        band_halfwidth=band_halfwidth,
        snr_margin_db=snr_margin_db,
        origin_ms=sig.first_sample_ms,
    )


def group_delays(
    sig: TeoaeSignal,
    frequencies: Iterable[float],
    band_halfwidth: float = DEFAULT_BAND_HALFWIDTH_HZ,
    nfft: int = DEFAULT_NFFT,
    snr_margin_db: float = DEFAULT_SNR_MARGIN_DB,
) -> dict[float, float | None]:
    """GD per frequency; ``None`` marks a frequency that failed the SNR gate."""
    spec = spectrum(sig, nfft)
    delays: dict[float, float | None] = {}
    for frequency in frequencies:
        try:
            delays[float(frequency)] = group_delay_from_spectrum(
                spec,
                frequency,
                band_halfwidth=band_halfwidth,
                snr_margin_db=snr_margin_db,
                origin_ms=sig.first_sample_ms,
            )
        except InsufficientSnrError as e:
            logger.debug(f"GD undefined: {e.message}")
            delays[float(frequency)] = None
    return delays


def spectral_features(
    sig: TeoaeSignal,
    frequencies: Iterable[float],
    band_halfwidth: float = DEFAULT_BAND_HALFWIDTH_HZ,
    nfft: int = DEFAULT_NFFT,
    snr_margin_db: float = DEFAULT_SNR_MARGIN_DB,
) -> SpectralFeatures:

    return SpectralFeatures(
        energy=energy(sig),
        gd=group_delays(sig, frequencies, band_halfwidth, nfft, snr_margin_db),
    )


def magnitude_db(spec: Spectrum, f_lo: float, f_hi: float) -> tuple[FloatArray, FloatArray]:
    """Bin magnitudes in dB re 20 uPa between ``f_lo`` and ``f_hi``."""
    if not f_lo < f_hi <= spec.fs / 2:
        raise SpectralError(f"Invalid plot range [{f_lo:g}, {f_hi:g}] Hz")
    selected = (spec.freqs >= f_lo) & (spec.freqs <= f_hi)
    with np.errstate(divide="ignore"):
        levels = 20.0 * np.log10(spec.magnitude[selected] / REFERENCE_PRESSURE_PA)
    return spec.freqs[selected], levels


def spl_db(pressure: npt.ArrayLike) -> float:
    """Level of the RMS pressure in dB SPL."""
    rms = float(np.sqrt(np.mean(np.square(np.asarray(pressure, dtype=np.float64)))))
    if rms == 0.0:
        return -math.inf
    return 20.0 * math.log10(rms / REFERENCE_PRESSURE_PA)
