"""Epoch, signal and WAV recording files."""
import logging
import re
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy.io import wavfile

from app.core.config import Settings, get_settings
from app.core.validators import ms_to_samples
from app.repositories.base import ArtifactFormatError, ArtifactNotFoundError, read_json
from app.schemas.recording import SessionDescriptorSchema
from app.services.epoching import (
    ClickEpochSet,
    StreamTooShortError,
    TeoaeSignal,
    click_schedule,
    segment_epochs,
)

logger = logging.getLogger(__name__)

SIGNAL_COLUMNS = ("time_ms", "pressure_pa", "noise_sd_pa")
EPOCH_FORMAT = "%.9g"
SIGNAL_FORMAT = "%.17g"

_HEADER_PAIR = re.compile(r"\s*([a-z_]+)\s*=\s*([^,\s]+)\s*")


def _parse_header(line: str, path: Path) -> dict[str, str]:
    text = line.lstrip("#").strip()
    fields: dict[str, str] = {}
    for part in text.split(","):
        match = _HEADER_PAIR.fullmatch(part)
        if match is None:
            raise ArtifactFormatError(f"Malformed header in {path}: {line.strip()!r}", path=str(path))
        fields[match.group(1)] = match.group(2)
    return fields


def _first_line(path: Path) -> str:
    if not path.is_file():
        raise ArtifactNotFoundError(f"File not found: {path}", path=str(path))
    with path.open(encoding="utf-8") as handle:
        return handle.readline()


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    return data.astype(np.float64)


class RecordingRepository:
    """
    Reads and writes recordings; relative paths resolve against ``base_dir``.

    Acquisition defaults (sampling rate, click rate, epoch length and
    calibration) come from ``settings`` wherever a file leaves them out.
    """

    def __init__(self, base_dir: str | Path = ".", settings: Settings | None = None):
        self.base_dir = Path(base_dir)
        self.settings = settings or get_settings()

    def resolve(self, path: str | Path) -> Path:
        candidate = Path(path)
        return candidate if candidate.is_absolute() else self.base_dir / candidate

    def _descriptor_defaults(self) -> dict[str, float]:
        return {
            "click_rate_hz": self.settings.click_rate_hz,
            "epoch_ms": self.settings.epoch_ms,
            "calibration_pa_per_fs": self.settings.calibration_pa_per_fs,
        }

    def load_epochs(self, path: str | Path) -> ClickEpochSet:
        """
        Load an epoch set from a CSV epoch file or a WAV recording.

        CSV: first line ``fs=<Hz>,click_onset=<index>``, then one epoch per row.
        WAV: a continuous stream next to a JSON descriptor with the same stem.
        """
        target = self.resolve(path)
        if target.suffix.lower() == ".wav":
            return self.load_wav(target)
        return self.load_epoch_csv(target)

    def load_epoch_csv(self, path: str | Path) -> ClickEpochSet:

        target = self.resolve(path)
        header = _parse_header(_first_line(target), target)
        try:
            fs = float(header.get("fs", self.settings.sampling_rate_hz))
            onset = int(header.get("click_onset", "0"))
            epochs = np.loadtxt(target, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as e:
            raise ArtifactFormatError(f"Malformed epoch file {target}: {e}", path=str(target)) from e
        return ClickEpochSet(epochs=epochs, fs=fs, click_onset=onset, session_id=target.stem)

    def save_epoch_csv(self, es: ClickEpochSet, path: str | Path) -> Path:

        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            target,
            es.epochs,
            delimiter=",",
            fmt=EPOCH_FORMAT,
            header=f"fs={es.fs!r},click_onset={es.click_onset}",
            comments="",
        )
        return target

    def load_wav(self, path: str | Path) -> ClickEpochSet:

        target = self.resolve(path)
        if not target.is_file():
            raise ArtifactNotFoundError(f"File not found: {target}", path=str(target))
        descriptor_path = target.with_suffix(".json")
        payload = read_json(descriptor_path)
        if not isinstance(payload, dict):
            raise ArtifactFormatError(f"Session descriptor {descriptor_path} is not an object")
        try:
            descriptor = SessionDescriptorSchema.model_validate({**self._descriptor_defaults(), **payload})
        except ValidationError as e:
            raise ArtifactFormatError(f"Invalid session descriptor {descriptor_path}: {e}") from e

        rate, data = wavfile.read(target)
        stream = _pcm_to_float(np.asarray(data))
        if stream.ndim == 2:
            if descriptor.channel >= stream.shape[1]:
                raise ArtifactFormatError(
                    f"{target} has {stream.shape[1]} channels, descriptor asks for {descriptor.channel}"
                )
            stream = stream[:, descriptor.channel]
        stream = stream * descriptor.calibration_pa_per_fs

        fs = float(rate)
        epoch_len = ms_to_samples(descriptor.epoch_ms, fs)
        period = fs / descriptor.click_rate_hz
        n_clicks = descriptor.n_clicks
        if n_clicks is None:
            n_clicks = int((stream.size - descriptor.first_click - epoch_len) // period) + 1
            if n_clicks < 1:
                raise StreamTooShortError(f"{target} is shorter than one epoch")
        schedule = click_schedule(n_clicks, descriptor.click_rate_hz, fs, descriptor.first_click)
        session_id = descriptor.session_id or target.stem
        logger.info(f"Loaded {n_clicks} clicks from {target.name} at {fs:g} Hz")
        return segment_epochs(stream, schedule, epoch_len, fs=fs, session_id=session_id)

    def save_signal(self, sig: TeoaeSignal, path: str | Path) -> Path:

        target = self.resolve(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        table = np.column_stack([sig.times_ms, sig.samples, sig.noise_sd])
        np.savetxt(
            target,
            table,
            delimiter=",",
            fmt=SIGNAL_FORMAT,
            header=f"fs={sig.fs!r},t_start={sig.t_start!r},t_end={sig.t_end!r}\n{','.join(SIGNAL_COLUMNS)}",
            comments="# ",
        )
        return target

    def load_signal(self, path: str | Path) -> TeoaeSignal:

        target = self.resolve(path)
        header = _parse_header(_first_line(target), target)
        try:
            table = np.loadtxt(target, delimiter=",", comments="#", ndmin=2)
            fs = float(header["fs"])
            t_start = float(header["t_start"])
            t_end = float(header["t_end"])
        except (KeyError, ValueError) as e:
            raise ArtifactFormatError(f"Malformed signal file {target}: {e}", path=str(target)) from e
        if table.shape[1] != len(SIGNAL_COLUMNS):
            raise ArtifactFormatError(
                f"Signal file {target} needs columns {', '.join(SIGNAL_COLUMNS)}",
                path=str(target),
            )
        return TeoaeSignal(
            samples=table[:, 1],
            fs=fs,
            t_start=t_start,
            t_end=t_end,
            noise_sd=table[:, 2],
        )
