"""SVG figures of waveforms, spectra and PC scatter; presentation only."""
import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from app.models.cohort import FeatureVector, OutcomeEnum  # noqa: E402
from app.services.epoching import TeoaeSignal  # noqa: E402
from app.services.spectral import DEFAULT_NFFT, magnitude_db, spectrum  # noqa: E402

logger = logging.getLogger(__name__)

SVG_SALT = "teoae"
MAGNITUDE_RANGE_HZ = (1000.0, 3000.0)
LABEL_COLOURS = {OutcomeEnum.IMPROVED: "tab:blue", OutcomeEnum.NONIMPROVED: "tab:red"}


def _save(fig: Figure, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": SVG_SALT}):
        fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote figure {target}")
    return target


def plot_waveform(sig: TeoaeSignal, path: str | Path, title: str = "") -> Path:
    """Denoised waveform with a +/- one noise-SD band."""
    fig, ax = plt.subplots(figsize=(6, 3))
    times = sig.times_ms
    ax.fill_between(times, sig.samples - sig.noise_sd, sig.samples + sig.noise_sd, color="0.8", lw=0)
    ax.plot(times, sig.samples, color="k", lw=0.8)
    ax.set_xlabel("Time after click (ms)")
    ax.set_ylabel("Pressure (Pa)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_magnitude(
    sig: TeoaeSignal,
    path: str | Path,
    nfft: int = DEFAULT_NFFT,
    f_range: tuple[float, float] = MAGNITUDE_RANGE_HZ,
    title: str = "",
) -> Path:
    """Spectral magnitude in dB SPL over the plotted range."""
    freqs, levels = magnitude_db(spectrum(sig, nfft), *f_range)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(freqs / 1000.0, levels, color="k", lw=0.8)
    ax.set_xlabel("Frequency (kHz)")
    ax.set_ylabel("Magnitude (dB SPL)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_trace_pair(
    first: TeoaeSignal,
    second: TeoaeSignal,
    path: str | Path,
    labels: tuple[str, str] = ("long GD", "short GD"),
) -> Path:
    """Two waveforms stacked on a shared time axis."""
    fig, axes = plt.subplots(2, 1, figsize=(6, 4), sharex=True)
    for ax, sig, label in zip(axes, (first, second), labels):
        ax.plot(sig.times_ms, sig.samples, color="k", lw=0.8)
        ax.set_ylabel("Pa")
        ax.set_title(label, fontsize="small")
    axes[-1].set_xlabel("Time after click (ms)")
    fig.tight_layout()
    return _save(fig, path)


def plot_pc_scatter(vectors: Sequence[FeatureVector], path: str | Path) -> Path:
    """Ears in (PC1, PC2, PC3) space, coloured by outcome."""
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    for outcome, colour in LABEL_COLOURS.items():
        group = [v for v in vectors if v.label is outcome]
        if not group:
            continue
        ax.scatter(
            [v.pc1 for v in group],
            [v.pc2 for v in group],
            [v.pc3 for v in group],
            color=colour,
            label=outcome.value,
        )
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_zlabel("PC3")
    if vectors:
        ax.legend()
    return _save(fig, path)
