"""Synthetic TEOAE waveforms, noisy epoch sets and labelled cohorts with known ground truth."""
import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from app.core.exceptions import InputError, NumericalError
from app.core.validators import PTA_FREQUENCIES_HZ, REFERENCE_PRESSURE_PA, ms_to_samples
from app.models.cohort import EarRecord, OutcomeEnum, SideEnum, Visit
from app.repositories.base import ArtifactRepository
from app.repositories.recording import RecordingRepository
from app.schemas.manifest import ManifestSchema
from app.services.epoching import (
    DEFAULT_FS_HZ,
    DEFAULT_WINDOW_MS,
    ClickEpochSet,
    FloatArray,
    TeoaeSignal,
)

logger = logging.getLogger(__name__)

DEFAULT_SIGMA_MS = 0.5
DEFAULT_EPOCH_MS = 25.0
DEFAULT_ARTEFACT_SCALE = 100.0
VISIT_SCHEDULE_DAYS = (0, 7, 14, 21, 28, 60, 90, 180)
GD_CARRIERS_HZ = (1000.0, 2000.0)

SeedLike = int | np.random.SeedSequence | np.random.Generator | None


class SynthError(InputError):
    code = "synth-error"


class PacketOutsideWindowError(SynthError):
    code = "packet-outside-window"


class InfeasibleDrawError(NumericalError):
    code = "infeasible-draw"


@dataclass(frozen=True)
class PacketSpec:
    """Gabor packet; ``center_ms`` is its group delay at the carrier."""

    carrier_hz: float
    center_ms: float
    sigma_ms: float = DEFAULT_SIGMA_MS
    amplitude: float = 1.0

    def __post_init__(self) -> None:
        if not self.carrier_hz > 0:
            raise SynthError(f"Carrier must be positive, got {self.carrier_hz}")
        if not self.sigma_ms > 0:
            raise SynthError(f"Envelope width must be positive, got {self.sigma_ms}")
        if self.center_ms < 0:
            raise PacketOutsideWindowError(f"Packet centre {self.center_ms} ms is before the click")

    def energy(self, fs: float = DEFAULT_FS_HZ) -> float:
        """Closed-form sum of squares of the sampled packet."""
        sigma_s = self.sigma_ms / 1000.0
        spread = (2.0 * math.pi * self.carrier_hz * sigma_s) ** 2
        return (
            self.amplitude**2 * sigma_s * fs * math.sqrt(math.pi) / 2.0 * (1.0 + math.exp(-spread))
        )


def spl_to_pa(level_db: float | None) -> float:
    """RMS pressure of a level in dB SPL; ``None`` means silence."""
    if level_db is None or (math.isinf(level_db) and level_db < 0):
        return 0.0
    return REFERENCE_PRESSURE_PA * 10.0 ** (level_db / 20.0)


def synth_packet(
    spec: PacketSpec | Sequence[PacketSpec],
    fs: float = DEFAULT_FS_HZ,
    duration_ms: float = DEFAULT_EPOCH_MS,
) -> FloatArray:
    """
    Sample one packet, or the sum of several, from click onset.

    ``a * exp(-(t - tc)^2 / (2 sigma^2)) * cos(2 pi fc (t - tc))``

    Raises:
        SynthError: carrier at or above Nyquist
        PacketOutsideWindowError: ``tc + 3 sigma`` runs past the duration
    """
    packets = [spec] if isinstance(spec, PacketSpec) else list(spec)
    n = ms_to_samples(duration_ms, fs)
    t = np.arange(n) / fs
    signal = np.zeros(n)
    for packet in packets:
        if packet.carrier_hz >= fs / 2:
            raise SynthError(f"Carrier {packet.carrier_hz:g} Hz is not below Nyquist ({fs / 2:g} Hz)")
        if packet.center_ms + 3.0 * packet.sigma_ms > duration_ms:
            raise PacketOutsideWindowError(
                f"Packet at {packet.center_ms:g} ms (sigma {packet.sigma_ms:g} ms) "
                f"does not fit {duration_ms:g} ms"
            )
        if packet.amplitude == 0.0:
            continue
        centre = packet.center_ms / 1000.0
        sigma = packet.sigma_ms / 1000.0
        envelope = np.exp(-np.square(t - centre) / (2.0 * sigma * sigma))
        signal += packet.amplitude * envelope * np.cos(2.0 * math.pi * packet.carrier_hz * (t - centre))
    return signal


def synth_epochs(
    clean: TeoaeSignal | npt.ArrayLike,
    n_epochs: int,
    noise_floor_db: float | None = None,
    artefact_rate: float = 0.0,
    seed: SeedLike = None,
    fs: float = DEFAULT_FS_HZ,
    artefact_scale: float = DEFAULT_ARTEFACT_SCALE,
    session_id: str = "",
) -> tuple[ClickEpochSet, npt.NDArray[np.bool_]]:
    """
    Repeat a clean click response with white noise and occasional bursts.

    Each epoch is ``clean`` plus Gaussian noise with the RMS of
    ``noise_floor_db`` (dB SPL). With probability ``artefact_rate`` an epoch
    also gets a Hann-tapered noise burst over 25-100 % of its length, with
    SD ``artefact_scale`` times the larger of the noise SD and the clean RMS.

    Returns:
        (epoch set, contamination mask with True for epochs that got a burst)
    """
    if n_epochs < 1:
        raise SynthError("At least one epoch is required")
    if not 0.0 <= artefact_rate <= 1.0:
        raise SynthError(f"Artefact rate must lie in [0, 1], got {artefact_rate}")
    if isinstance(clean, TeoaeSignal):
        fs = clean.fs
        template = np.asarray(clean.samples, dtype=np.float64)
    else:
        template = np.asarray(clean, dtype=np.float64)
    if template.ndim != 1 or template.size == 0:
        raise SynthError("Clean signal must be a non-empty 1-D array")

    rng = np.random.default_rng(seed)
    length = template.size
    noise_sd = spl_to_pa(noise_floor_db)
    epochs = template[None, :] + rng.standard_normal((n_epochs, length)) * noise_sd
    contaminated = rng.random(n_epochs) < artefact_rate

    level = artefact_scale * max(noise_sd, float(np.sqrt(np.mean(np.square(template)))))
    if level == 0.0:
        level = artefact_scale * REFERENCE_PRESSURE_PA
    shortest = max(1, math.ceil(0.25 * length))
    for index in np.flatnonzero(contaminated):
        span = int(rng.integers(shortest, length + 1))
        start = int(rng.integers(0, length - span + 1))
        burst = rng.standard_normal(span) * level * np.hanning(span)
        epochs[index, start:start + span] += burst

    return ClickEpochSet(epochs=epochs, fs=fs, click_onset=0, session_id=session_id), contaminated


@dataclass(frozen=True)
class GroupTargets:
    """(mean, SD) of each feature for one outcome group."""

    gd1k: tuple[float, float]
    gd2k: tuple[float, float]
    energy: tuple[float, float]

    def __post_init__(self) -> None:
        for name in ("gd1k", "gd2k", "energy"):
            mean, sd = getattr(self, name)
            if sd < 0:
                raise SynthError(f"{name} SD must be non-negative, got {sd}")
        if self.energy[0] <= 0:
            raise SynthError("Energy mean must be positive")


IMPROVED_TARGETS = GroupTargets(gd1k=(4.29, 1.18), gd2k=(3.75, 1.03), energy=(5.57e-9, 5.40e-9))
NONIMPROVED_TARGETS = GroupTargets(gd1k=(3.43, 0.95), gd2k=(3.05, 0.72), energy=(4.65e-9, 4.73e-9))


@dataclass(frozen=True)
class CohortSpec:
    """Group sizes and feature distributions of a synthetic study."""

    n_improved: int = 14
    n_nonimproved: int = 16
    improved: GroupTargets = IMPROVED_TARGETS
    nonimproved: GroupTargets = NONIMPROVED_TARGETS
    noise_floor_db: float | None = -21.0
    artefact_rate: float = 0.02
    seed: int = 0
    n_epochs: int = 100
    sigma_ms: float = DEFAULT_SIGMA_MS
    fs: float = DEFAULT_FS_HZ
    epoch_ms: float = DEFAULT_EPOCH_MS
    window_ms: tuple[float, float] = DEFAULT_WINDOW_MS
    min_gd_ms: float | None = None
    max_redraws: int = 100
    include_contralateral: bool = False
    dropout_rate: float = 0.2

    def __post_init__(self) -> None:
        if self.n_improved < 2 or self.n_nonimproved < 2:
            raise SynthError("Each group needs at least 2 ears")
        if not 0.0 <= self.artefact_rate <= 1.0:
            raise SynthError("Artefact rate must lie in [0, 1]")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise SynthError("Dropout rate must lie in [0, 1)")
        if self.n_epochs < 1:
            raise SynthError("At least one epoch per ear is required")
        if not self.window_ms[0] < self.window_ms[1] <= self.epoch_ms:
            raise SynthError(f"Window {self.window_ms} does not fit a {self.epoch_ms} ms epoch")

    @property
    def gd_floor_ms(self) -> float:
        """Earliest packet centre; by default the window start plus two packet widths."""
        if self.min_gd_ms is not None:
            return self.min_gd_ms
        return self.window_ms[0] + 2.0 * self.sigma_ms

    @property
    def max_gd_ms(self) -> float:
        return self.window_ms[1] - 3.0 * self.sigma_ms

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CohortSpec":

        values = dict(data)
        for group in ("improved", "nonimproved"):
            if isinstance(values.get(group), dict):
                values[group] = GroupTargets(
                    **{key: tuple(value) for key, value in values[group].items()}
                )
        if "window_ms" in values:
            values["window_ms"] = tuple(values["window_ms"])
        try:
            return cls(**values)
        except TypeError as e:
            raise SynthError(f"Invalid cohort spec: {e}") from e


@dataclass(frozen=True)
class EarTruth:

    ear_id: str
    label: OutcomeEnum
    affected: bool
    gd1k: float
    gd2k: float
    energy: float
    amplitude: float
    n_contaminated: int

    def to_dict(self) -> dict[str, Any]:
        values = asdict(self)
        values["label"] = self.label.value
        return values


@dataclass
class SyntheticCohort:

    spec: CohortSpec
    records: list[EarRecord] = field(default_factory=list)
    recordings: dict[str, ClickEpochSet] = field(default_factory=dict)
    truths: list[EarTruth] = field(default_factory=list)

    def manifest(self) -> ManifestSchema:
        return ManifestSchema.from_records(self.records)


def _draw_bounded_normal(
    rng: np.random.Generator,
    target: tuple[float, float],
    lo: float,
    hi: float,
    max_redraws: int,
    name: str,
) -> float:
    mean, sd = target
    for _ in range(max_redraws + 1):
        value = float(rng.normal(mean, sd)) if sd > 0 else float(mean)
        if lo <= value <= hi:
            return value
    raise InfeasibleDrawError(
        f"No {name} in [{lo:g}, {hi:g}] after {max_redraws} redraws from N({mean:g}, {sd:g})"
    )


def _draw_energy(rng: np.random.Generator, target: tuple[float, float]) -> float:
    """Log-normal draw with the requested mean and SD."""
    mean, sd = target
    if sd == 0:
        return float(mean)
    log_var = math.log1p((sd / mean) ** 2)
    return float(rng.lognormal(math.log(mean) - log_var / 2.0, math.sqrt(log_var)))


def ear_waveform(gd1k: float, gd2k: float, energy_target: float, spec: CohortSpec) -> tuple[FloatArray, float]:
    """
    Two-packet click response whose analysis-window energy equals ``energy_target``.

    Returns:
        (samples over one epoch, common packet amplitude)
    """
    packets = [
        PacketSpec(carrier_hz=GD_CARRIERS_HZ[0], center_ms=gd1k, sigma_ms=spec.sigma_ms),
        PacketSpec(carrier_hz=GD_CARRIERS_HZ[1], center_ms=gd2k, sigma_ms=spec.sigma_ms),
    ]
    unit = synth_packet(packets, spec.fs, spec.epoch_ms)
    first = ms_to_samples(spec.window_ms[0], spec.fs)
    length = ms_to_samples(spec.window_ms[1] - spec.window_ms[0], spec.fs)
    windowed = float(np.sum(np.square(unit[first:first + length])))
    if windowed <= 0.0:
        raise InfeasibleDrawError("Packets leave no energy inside the analysis window")
    amplitude = math.sqrt(energy_target / windowed)
    return unit * amplitude, amplitude


def _audiograms(
    rng: np.random.Generator, label: OutcomeEnum
) -> tuple[dict[int, float], dict[int, float]]:
    index = {f: float(5 * rng.integers(6, 15)) for f in PTA_FREQUENCIES_HZ}
    if label is OutcomeEnum.IMPROVED:
        changes = {f: float(5 * rng.integers(-1, 3)) for f in PTA_FREQUENCIES_HZ}
        changes[PTA_FREQUENCIES_HZ[int(rng.integers(len(PTA_FREQUENCIES_HZ)))]] = float(
            5 * rng.integers(3, 7)
        )
    else:
        changes = {f: float(5 * rng.integers(-2, 3)) for f in PTA_FREQUENCIES_HZ}
    last = {f: index[f] - changes[f] for f in PTA_FREQUENCIES_HZ}
    return index, last


def _visits(
    rng: np.random.Generator,
    start: date,
    index_pta: dict[int, float],
    last_pta: dict[int, float],
    recording: str | None,
    dropout_rate: float,
) -> list[Visit]:
    attended = 2
    while attended < len(VISIT_SCHEDULE_DAYS) and rng.random() >= dropout_rate:
        attended += 1
    days = VISIT_SCHEDULE_DAYS[:attended]
    visits: list[Visit] = []
    for position, day in enumerate(days):
        share = position / (len(days) - 1)
        pta = {
            f: round(index_pta[f] + share * (last_pta[f] - index_pta[f]), 1)
            for f in PTA_FREQUENCIES_HZ
        }
        visits.append(
            Visit(
                timestamp=start + timedelta(days=day),
                pta=pta,
                teoae=recording if position == 0 else None,
            )
        )
    return visits


def _synth_ear(
    seed: np.random.SeedSequence,
    patient_id: str,
    side: SideEnum,
    label: OutcomeEnum,
    affected: bool,
    start: date,
    spec: CohortSpec,
) -> tuple[EarRecord, ClickEpochSet, EarTruth]:
    rng = np.random.default_rng(seed)
    targets = spec.improved if label is OutcomeEnum.IMPROVED else spec.nonimproved
    lo, hi = spec.gd_floor_ms, spec.max_gd_ms
    gd1k = _draw_bounded_normal(rng, targets.gd1k, lo, hi, spec.max_redraws, "gd1k")
    gd2k = _draw_bounded_normal(rng, targets.gd2k, lo, hi, spec.max_redraws, "gd2k")
    energy_target = _draw_energy(rng, targets.energy)
    clean, amplitude = ear_waveform(gd1k, gd2k, energy_target, spec)

    ear_id = f"{patient_id}-{side.value}"
    epochs, mask = synth_epochs(
        clean,
        spec.n_epochs,
        noise_floor_db=spec.noise_floor_db,
        artefact_rate=spec.artefact_rate,
        seed=rng,
        fs=spec.fs,
        session_id=ear_id,
    )

    recording = f"epochs/{ear_id}.csv"
    index_pta, last_pta = _audiograms(rng, label)
    record = EarRecord(
        patient_id=patient_id,
        side=side,
        affected=affected,
        visits=_visits(rng, start, index_pta, last_pta, recording, spec.dropout_rate),
    )
    truth = EarTruth(
        ear_id=ear_id,
        label=label,
        affected=affected,
        gd1k=gd1k,
        gd2k=gd2k,
        energy=energy_target,
        amplitude=amplitude,
        n_contaminated=int(mask.sum()),
    )
    return record, epochs, truth


def synth_cohort(spec: CohortSpec | None = None) -> SyntheticCohort:
    """
    Generate a labelled cohort, one patient per affected ear.

    Every ear draws from its own child of the cohort seed, so one ear's
    draws never shift another's.
    """
    spec = spec or CohortSpec()
    n_patients = spec.n_improved + spec.n_nonimproved
    children = np.random.SeedSequence(spec.seed).spawn(1 + 2 * n_patients)
    top = np.random.default_rng(children[0])

    labels = np.array(
        [OutcomeEnum.IMPROVED] * spec.n_improved + [OutcomeEnum.NONIMPROVED] * spec.n_nonimproved,
        dtype=object,
    )
    labels = labels[top.permutation(n_patients)]
    cohort = SyntheticCohort(spec=spec)

    for p in range(n_patients):
        patient_id = f"P{p + 1:03d}"
        affected_side = SideEnum.LEFT if top.random() < 0.5 else SideEnum.RIGHT
        start = date(2020, 1, 1) + timedelta(days=int(top.integers(0, 365)))
        ears = [(affected_side, OutcomeEnum(labels[p]), True, children[1 + 2 * p])]
        if spec.include_contralateral:
            other = SideEnum.RIGHT if affected_side is SideEnum.LEFT else SideEnum.LEFT
            ears.append((other, OutcomeEnum.NONIMPROVED, False, children[2 + 2 * p]))

        for side, label, affected, seed in ears:
            record, epochs, truth = _synth_ear(seed, patient_id, side, label, affected, start, spec)
            cohort.records.append(record)
            cohort.recordings[record.visits[0].teoae or ""] = epochs
            cohort.truths.append(truth)

    logger.info(
        f"Synthesized {len(cohort.records)} ears "
        f"({spec.n_improved} improved, {spec.n_nonimproved} nonimproved affected ears)"
    )
    return cohort


def write_cohort(cohort: SyntheticCohort, out_dir: str | Path) -> Path:
    """Write manifest.json, ground truth, the cohort spec and one epoch CSV per ear."""
    artifacts = ArtifactRepository(out_dir)
    recordings = RecordingRepository(out_dir)
    for relative, epochs in cohort.recordings.items():
        recordings.save_epoch_csv(epochs, relative)
    artifacts.save_json("truth.json", [truth.to_dict() for truth in cohort.truths])
    artifacts.save_json("cohort_spec.json", cohort.spec.to_dict())
    return artifacts.save_json("manifest.json", cohort.manifest())
