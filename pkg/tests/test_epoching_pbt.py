"""
Property-based tests for epoching, artefact rejection and median denoising.

Uses Hypothesis for the order, scale and contamination properties and
fixed-seed Monte-Carlo runs for the statistical bounds.
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from app.core.validators import ms_to_samples
from app.services.epoching import (
    AllEpochsRejectedError,
    ClickEpochSet,
    InsufficientEpochsError,
    OverlappingEpochsError,
    StreamTooShortError,
    WindowOutOfRangeError,
    apply_window,
    artefact_mask,
    click_schedule,
    estimate_noise_sd,
    extract_signal,
    median_denoise,
    reject_artefacts,
    segment_epochs,
)
from app.services.synth import synth_epochs
from tests.helpers import FS

seed_strategy = st.integers(min_value=0, max_value=2**32 - 1)


def _random_epochs(seed: int, n_epochs: int, length: int = 32, spread: float = 1.0) -> ClickEpochSet:
    rng = np.random.default_rng(seed)
    scales = rng.lognormal(0.0, spread, n_epochs)
    return ClickEpochSet(epochs=rng.standard_normal((n_epochs, length)) * scales[:, None])


class TestSegmentation:
    """Cutting a continuous stream into click-aligned epochs."""

    def test_default_session_geometry(self) -> None:
        """3000 clicks at 10/s and 25 ms epochs give 3000 rows of 1103 samples."""
        epoch_len = ms_to_samples(25.0, FS)
        schedule = click_schedule(3000, 10.0, FS)
        stream = np.zeros(int(schedule[-1]) + epoch_len)

        es = segment_epochs(stream, schedule, epoch_len, FS)

        assert epoch_len == 1103
        assert es.epochs.shape == (3000, 1103)
        assert es.click_onset == 0

    def test_single_click_exact_stream(self) -> None:
        """One click and a stream of exactly one epoch give one epoch."""
        es = segment_epochs(np.arange(50.0), [0], 50)
        assert es.n_epochs == 1
        assert np.array_equal(es.epochs[0], np.arange(50.0))

    @settings(max_examples=50, deadline=None)
    @given(
        n_clicks=st.integers(min_value=1, max_value=20),
        epoch_len=st.integers(min_value=1, max_value=40),
        gap=st.integers(min_value=0, max_value=10),
        first=st.integers(min_value=0, max_value=20),
        tail=st.integers(min_value=0, max_value=5),
    )
    def test_epochs_are_stream_slices(
        self, n_clicks: int, epoch_len: int, gap: int, first: int, tail: int
    ) -> None:
        """Each epoch equals the stream slice starting at its scheduled onset."""
        schedule = first + np.arange(n_clicks) * (epoch_len + gap)
        stream = np.random.default_rng(n_clicks).standard_normal(int(schedule[-1]) + epoch_len + tail)

        es = segment_epochs(stream, schedule, epoch_len)

        assert es.n_epochs == n_clicks
        for row, onset in enumerate(schedule):
            assert np.array_equal(es.epochs[row], stream[onset:onset + epoch_len])

    def test_generator_schedule_matches_ground_truth(self) -> None:
        """Segments of a synthetic stream equal the epochs it was built from."""
        truth, _ = synth_epochs(np.linspace(0, 1e-4, 100), 12, noise_floor_db=30.0, seed=5)
        schedule = click_schedule(12, 400.0, FS)
        stream = np.zeros(int(schedule[-1]) + 100)
        for row, onset in enumerate(schedule):
            stream[onset:onset + 100] = truth.epochs[row]

        es = segment_epochs(stream, schedule, 100)

        assert np.array_equal(es.epochs, truth.epochs)

    def test_overlapping_epochs_rejected(self) -> None:
        with pytest.raises(OverlappingEpochsError):
            segment_epochs(np.zeros(100), [0, 5], 10)

    def test_short_stream_rejected(self) -> None:
        with pytest.raises(StreamTooShortError):
            segment_epochs(np.zeros(25), [0, 20], 10)

    def test_click_schedule_period(self) -> None:
        assert click_schedule(3, 10.0, FS).tolist() == [0, 4410, 8820]


class TestArtefactRejection:
    """RMS rule ``rms <= k * median(rms)`` iterated to a fixed point."""

    @settings(max_examples=60, deadline=None)
    @given(
        seed=seed_strategy,
        n_epochs=st.integers(min_value=3, max_value=40),
        k=st.floats(min_value=1.0, max_value=4.0),
    )
    def test_rejection_is_idempotent(self, seed: int, n_epochs: int, k: float) -> None:
        """Rejecting twice with the same k keeps the same epochs as rejecting once."""
        once = reject_artefacts(_random_epochs(seed, n_epochs), k)
        assume(once.n_epochs >= 3)

        twice = reject_artefacts(once, k)

        assert np.array_equal(once.epochs, twice.epochs)

    @settings(max_examples=30, deadline=None)
    @given(n_epochs=st.integers(min_value=3, max_value=30), k=st.floats(min_value=1.0, max_value=10.0))
    def test_identical_epochs_all_kept(self, n_epochs: int, k: float) -> None:
        """Equal epochs have RMS equal to the median RMS and all survive."""
        row = np.sin(np.linspace(0, 6, 64))
        es = ClickEpochSet(epochs=np.tile(row, (n_epochs, 1)))
        assert reject_artefacts(es, k).n_epochs == n_epochs

    def test_gaussian_epochs_mostly_retained(self) -> None:
        """Clean white-noise epochs at k = 2 keep at least 95% of epochs."""
        rng = np.random.default_rng(11)
        es = ClickEpochSet(epochs=rng.standard_normal((500, 1103)))
        assert artefact_mask(es, 2.0).mean() >= 0.95

    def test_exactly_contaminated_epochs_removed(self) -> None:
        """100x bursts in about 10% of epochs are removed, and nothing else."""
        es, contaminated = synth_epochs(
            np.zeros(1103), 200, noise_floor_db=0.0, artefact_rate=0.1, seed=3
        )
        assert contaminated.sum() > 0

        keep = artefact_mask(es, 2.0)

        assert np.array_equal(keep, ~contaminated)

    def test_all_rejected_raises(self) -> None:
        """With k < 1 the rule peels off the loudest epoch until none remain."""
        es = ClickEpochSet(epochs=np.array([[1.0], [2.0], [3.0]]), session_id="s1")
        with pytest.raises(AllEpochsRejectedError):
            reject_artefacts(es, 0.5)

    def test_fewer_than_three_epochs_rejected(self) -> None:
        with pytest.raises(InsufficientEpochsError):
            reject_artefacts(ClickEpochSet(epochs=np.ones((2, 8))), 2.0)


class TestMedianDenoise:
    """Samplewise median and its noise estimate."""

    def test_identical_epochs_return_waveform(self) -> None:
        waveform = np.cos(np.linspace(0, 10, 200))
        sig = median_denoise(ClickEpochSet(epochs=np.tile(waveform, (7, 1))))
        assert np.array_equal(sig.samples, waveform)
        assert np.all(sig.noise_sd == 0.0)

    def test_laplacian_noise_within_median_standard_error(self) -> None:
        """3000 epochs with Laplace(b) noise: max error within 4.5 SE, SE = b / sqrt(n)."""
        rng = np.random.default_rng(21)
        n_epochs, b = 3000, 0.1
        waveform = np.sin(np.linspace(0, 4 * math.pi, 200))
        epochs = waveform + rng.laplace(0.0, b, (n_epochs, waveform.size))

        sig = median_denoise(ClickEpochSet(epochs=epochs))

        standard_error = b / math.sqrt(n_epochs)
        assert np.max(np.abs(sig.samples - waveform)) <= 4.5 * standard_error

    def test_median_breakdown(self) -> None:
        """49 of 100 epochs replaced by +1 Pa leave the clean waveform."""
        waveform = 1e-3 * np.sin(np.linspace(0, 6, 300))
        epochs = np.tile(waveform, (100, 1))
        epochs[:49] = 1.0

        sig = median_denoise(ClickEpochSet(epochs=epochs))

        assert np.allclose(sig.samples, waveform, rtol=0.0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(
        seed=seed_strategy,
        n_epochs=st.integers(min_value=1, max_value=25),
        data=st.data(),
    )
    def test_contamination_stays_within_clean_range(
        self, seed: int, n_epochs: int, data: st.DataObject
    ) -> None:
        """With fewer than half the rows replaced, each median lies in the clean range."""
        rng = np.random.default_rng(seed)
        epochs = rng.standard_normal((n_epochs, 16))
        n_bad = data.draw(st.integers(min_value=0, max_value=(n_epochs - 1) // 2))
        bad_value = data.draw(st.floats(min_value=-1e6, max_value=1e6))
        clean = epochs[n_bad:].copy()
        epochs[:n_bad] = bad_value

        samples = median_denoise(ClickEpochSet(epochs=epochs)).samples

        assert np.all(samples >= clean.min(axis=0) - 1e-12)
        assert np.all(samples <= clean.max(axis=0) + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=seed_strategy, n_epochs=st.integers(min_value=2, max_value=30))
    def test_permutation_invariance(self, seed: int, n_epochs: int) -> None:
        es = _random_epochs(seed, n_epochs)
        shuffled = ClickEpochSet(epochs=es.epochs[np.random.default_rng(seed).permutation(n_epochs)])

        first, second = median_denoise(es), median_denoise(shuffled)

        assert np.array_equal(first.samples, second.samples)
        assert np.allclose(first.noise_sd, second.noise_sd, rtol=1e-12, atol=0.0)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=seed_strategy,
        n_epochs=st.integers(min_value=2, max_value=30),
        scale=st.floats(min_value=1e-6, max_value=1e6),
    )
    def test_scale_commutes(self, seed: int, n_epochs: int, scale: float) -> None:
        """denoise(c * epochs) = c * denoise(epochs) for c > 0."""
        es = _random_epochs(seed, n_epochs)
        scaled = ClickEpochSet(epochs=es.epochs * scale)

        assert np.allclose(
            median_denoise(scaled).samples, scale * median_denoise(es).samples, rtol=1e-12, atol=0.0
        )
        assert np.allclose(estimate_noise_sd(scaled), scale * estimate_noise_sd(es), rtol=1e-9, atol=0.0)

    def test_noise_sd_of_white_noise(self) -> None:
        """Unit white noise over 3000 epochs: every entry within 10% of sqrt(pi/2)/sqrt(3000)."""
        rng = np.random.default_rng(8)
        noise_sd = estimate_noise_sd(ClickEpochSet(epochs=rng.standard_normal((3000, 100))))
        expected = math.sqrt(math.pi / 2.0) / math.sqrt(3000)
        assert np.all(np.abs(noise_sd / expected - 1.0) < 0.10)

    def test_noise_sd_of_identical_epochs_is_zero(self) -> None:
        assert np.all(estimate_noise_sd(ClickEpochSet(epochs=np.ones((5, 10)))) == 0.0)

    def test_noise_sd_needs_two_epochs(self) -> None:
        with pytest.raises(InsufficientEpochsError):
            estimate_noise_sd(ClickEpochSet(epochs=np.ones((1, 10))))


class TestWindow:
    """Rectangular extraction of the analysis window."""

    def _full_epoch(self) -> np.ndarray:
        return np.arange(1103, dtype=np.float64)

    def test_default_window_length(self) -> None:
        """(2.5, 20) ms at 44.1 kHz keeps 772 samples starting at sample 110."""
        sig = median_denoise(ClickEpochSet(epochs=np.tile(self._full_epoch(), (3, 1))))

        windowed = apply_window(sig, 2.5, 20.0)

        assert windowed.length == 772
        assert windowed.samples[0] == 110.0
        assert windowed.t_start == 2.5 and windowed.t_end == 20.0

    def test_full_duration_is_identity(self) -> None:
        sig = median_denoise(ClickEpochSet(epochs=np.tile(self._full_epoch(), (3, 1))))
        assert np.array_equal(apply_window(sig, 0.0, sig.t_end).samples, sig.samples)

    def test_window_is_idempotent(self) -> None:
        sig = median_denoise(ClickEpochSet(epochs=np.tile(self._full_epoch(), (3, 1))))
        once = apply_window(sig, 2.5, 20.0)
        twice = apply_window(once, 2.5, 20.0)
        assert np.array_equal(once.samples, twice.samples)
        assert np.array_equal(once.noise_sd, twice.noise_sd)

    @pytest.mark.parametrize("window", [(2.5, 30.0), (5.0, 5.0), (10.0, 2.5), (-1.0, 10.0)])
    def test_out_of_range_window(self, window: tuple[float, float]) -> None:
        sig = median_denoise(ClickEpochSet(epochs=np.tile(self._full_epoch(), (3, 1))))
        with pytest.raises(WindowOutOfRangeError):
            apply_window(sig, *window)

    def test_other_sampling_rate(self) -> None:
        """At 48 kHz the default window keeps round(17.5 * 48) = 840 samples."""
        es = ClickEpochSet(epochs=np.zeros((3, 1200)), fs=48000.0)
        assert extract_signal(es).length == 840

    def test_extract_signal_without_rejection(self, two_packet_epoch: np.ndarray) -> None:
        """Skipping rejection takes the median over every epoch."""
        epochs = np.tile(two_packet_epoch, (4, 1))
        epochs[0] *= 1000.0
        kept = extract_signal(ClickEpochSet(epochs=epochs), reject=False)
        assert kept.length == 772
        assert np.allclose(kept.samples, two_packet_epoch[110:882])
