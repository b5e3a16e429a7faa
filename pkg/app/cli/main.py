import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from app.core.config import Settings, get_settings
from app.core.exceptions import InputError, OaeError
from app.models.cohort import gd_feature_name
from app.repositories.base import ArtifactRepository, dumps, read_json
from app.repositories.recording import RecordingRepository
from app.schemas.common import ErrorResponse
from app.schemas.manifest import ManifestSchema
from app.schemas.report import StudyReportSchema
from app.schemas.study import StudyConfigSchema
from app.services.cohort import StudyResult, run_study
from app.services.epoching import extract_signal
from app.services.pca import coefficients, fit_pca
from app.services.plots import plot_magnitude, plot_pc_scatter, plot_trace_pair, plot_waveform
from app.services.report import read_feature_vectors, signal_feature_rows, write_report_files
from app.services.spectral import spectral_features, spl_db
from app.services.synth import CohortSpec, synth_cohort, write_cohort

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class InvalidConfigError(InputError):
    code = "invalid-config"


def _feature_sets(values: list[str] | None) -> list[list[str]] | None:
    if not values:
        return None
    return [[name.strip() for name in value.split(",") if name.strip()] for value in values]


def load_study_config(
    settings: Settings,
    config_path: str | None = None,
    seed: int | None = None,
    **overrides: object,
) -> StudyConfigSchema:
    """
    Study config from a JSON file or the settings defaults.

    Seed precedence: ``seed`` argument, then ``OAE_SEED``, then the file.
    """
    try:
        if config_path:
            config = StudyConfigSchema.model_validate(read_json(Path(config_path)))
        else:
            config = StudyConfigSchema.from_settings(settings)
        updates = {key: value for key, value in overrides.items() if value is not None}
        if settings.seed is not None:
            updates["seed"] = settings.seed
        if seed is not None:
            updates["seed"] = seed
        if updates:
            config = StudyConfigSchema.model_validate({**config.model_dump(), **updates})
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid study config: {e.errors()[0]['msg']}") from e
    return config


def cmd_denoise(args: argparse.Namespace, settings: Settings) -> int:

    recordings = RecordingRepository(settings=settings)
    epochs = recordings.load_epochs(args.input)
    window = tuple(args.window) if args.window else (settings.window_start_ms, settings.window_end_ms)
    k = args.k if args.k is not None else settings.artefact_k
    signal = extract_signal(epochs, k=k, window=window, reject=not args.no_reject)  # type: ignore[arg-type]
    recordings.save_signal(signal, args.output)
    logger.info(
        f"Denoised {epochs.n_epochs} epochs of {args.input} into {signal.length} samples; "
        f"residual noise {spl_db(signal.noise_sd):.1f} dB SPL"
    )
    if args.plot:
        plot_waveform(signal, args.plot, title=Path(args.input).stem)
    if args.magnitude_plot:
        plot_magnitude(signal, args.magnitude_plot, nfft=settings.nfft)
    return 0


def cmd_features(args: argparse.Namespace, settings: Settings) -> int:

    recordings = RecordingRepository(settings=settings)
    frequencies = args.gd_frequencies or settings.get_gd_frequencies()
    entries = []
    for path in args.signals:
        features = spectral_features(
            recordings.load_signal(path),
            frequencies,
            band_halfwidth=args.band if args.band is not None else settings.gd_band_hz,
            nfft=args.nfft or settings.nfft,
            snr_margin_db=settings.snr_margin_db,
        )
        entries.append((str(path), features))

    gd_names = [gd_feature_name(f) for f in frequencies]
    output = Path(args.output)
    ArtifactRepository(output.parent).save_rows(
        output.name,
        ("source", "energy", *gd_names, "status"),
        signal_feature_rows(entries, gd_names, frequencies),
    )
    return 0


def cmd_pca(args: argparse.Namespace, settings: Settings) -> int:

    recordings = RecordingRepository(settings=settings)
    signals = [recordings.load_signal(path) for path in args.signals]
    model = fit_pca(signals, args.components or settings.pca_components)
    artifacts = ArtifactRepository(args.out_dir)
    artifacts.save_json("pca_model.json", model.to_dict())
    header = ("source", *[f"pc{i + 1}" for i in range(model.n_components)])
    rows = [
        [str(path), *[repr(float(v)) for v in coefficients(model, signal)]]
        for path, signal in zip(args.signals, signals)
    ]
    artifacts.save_rows("projections.csv", header, rows)
    return 0


def cmd_study(args: argparse.Namespace, settings: Settings) -> int:

    manifest_path = Path(args.manifest)
    try:
        manifest = ManifestSchema.model_validate(read_json(manifest_path))
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid manifest {manifest_path}: {e.errors()[0]['msg']}") from e

    config = load_study_config(
        settings,
        args.config,
        seed=args.seed,
        feature_sets=_feature_sets(args.features),
        grid_log2_step=args.grid_step,
        k=args.k,
        n_jobs=args.jobs,
        include_contralateral=True if args.contralateral else None,
    )
    result = run_study(
        manifest.to_records(),
        config,
        RecordingRepository(manifest_path.parent, settings),
        out_dir=args.out_dir,
    )
    if args.plots:
        out_dir = Path(args.out_dir)
        if result.pca_model is not None:
            plot_pc_scatter(result.features.vectors, out_dir / "pc_scatter.svg")
        for name in config.gd_feature_names():
            _plot_gd_extremes(result, name, out_dir / f"traces_{name}.svg")
    return 0


def _plot_gd_extremes(result: StudyResult, name: str, path: Path) -> None:
    """Waveforms of the ears with the longest and the shortest group delay."""
    timed = sorted(
        (value, vector.ear_id)
        for vector in result.features.vectors
        if (value := vector.gd.get(name)) is not None
    )
    if len(timed) < 2:
        logger.info(f"Fewer than two ears with {name}; no trace plot")
        return
    (short_gd, short_ear), (long_gd, long_ear) = timed[0], timed[-1]
    plot_trace_pair(
        result.signals[long_ear],
        result.signals[short_ear],
        path,
        labels=(f"{long_ear}: {name} = {long_gd:.2f} ms", f"{short_ear}: {name} = {short_gd:.2f} ms"),
    )


def cmd_synth(args: argparse.Namespace, settings: Settings) -> int:

    values = read_json(Path(args.spec)) if args.spec else {}
    seed = args.seed if args.seed is not None else settings.seed
    updates = {
        "seed": seed,
        "n_improved": args.n_improved,
        "n_nonimproved": args.n_nonimproved,
        "n_epochs": args.n_epochs,
        "include_contralateral": True if args.contralateral else None,
    }
    values.update({key: value for key, value in updates.items() if value is not None})
    cohort = synth_cohort(CohortSpec.from_dict(values))
    write_cohort(cohort, args.out_dir)
    return 0


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:

    artifacts = ArtifactRepository(args.study_dir)
    try:
        report = StudyReportSchema.model_validate(artifacts.load_json("study_report.json"))
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid study report: {e.errors()[0]['msg']}") from e
    write_report_files(report, artifacts)
    if report.pca_failure is None and artifacts.exists("features.csv"):
        plot_pc_scatter(read_feature_vectors(artifacts), artifacts.path("pc_scatter.svg"))
    return 0


def build_parser(settings: Settings | None = None) -> argparse.ArgumentParser:

    settings = settings or get_settings()
    parser = argparse.ArgumentParser(
        prog="teoae",
        description=(
            f"{settings.app_name}: TEOAE denoising, feature extraction and hearing-outcome prognosis"
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    denoise = commands.add_parser("denoise", help="Epochs -> denoised windowed signal CSV")
    denoise.add_argument("input", help="Epoch CSV or WAV recording")
    denoise.add_argument("output", help="Signal CSV to write")
    denoise.add_argument("--k", type=float, default=None, help="Artefact rejection factor")
    denoise.add_argument("--window", type=float, nargs=2, metavar=("START_MS", "END_MS"))
    denoise.add_argument("--no-reject", action="store_true", help="Median over all epochs")
    denoise.add_argument("--plot", help="Waveform SVG to write")
    denoise.add_argument("--magnitude-plot", help="Magnitude spectrum SVG to write")
    denoise.set_defaults(handler=cmd_denoise)

    features = commands.add_parser("features", help="Signal CSVs -> energy and group delays")
    features.add_argument("signals", nargs="+", help="Signal CSV files")
    features.add_argument("--output", "-o", required=True, help="Features CSV to write")
    features.add_argument("--gd-frequencies", type=float, nargs="+", help="GD frequencies (Hz)")
    features.add_argument("--band", type=float, default=None, help="GD band half-width (Hz)")
    features.add_argument("--nfft", type=int, default=None)
    features.set_defaults(handler=cmd_features)

    pca = commands.add_parser("pca", help="Fit PCA on signal CSVs")
    pca.add_argument("signals", nargs="+", help="Signal CSV files of equal length")
    pca.add_argument("--out-dir", required=True)
    pca.add_argument("--components", type=int, default=None)
    pca.set_defaults(handler=cmd_pca)

    study = commands.add_parser("study", help="Run the full study over a manifest")
    study.add_argument("manifest", help="Manifest JSON")
    study.add_argument("--out-dir", required=True)
    study.add_argument("--config", help="Study config JSON")
    study.add_argument("--seed", type=int, default=None)
    study.add_argument(
        "--features",
        action="append",
        help="Comma-separated feature set, repeatable (e.g. pc1,pc2,pc3)",
    )
    study.add_argument("--grid-step", type=float, default=None, help="log2 grid step")
    study.add_argument("--k", type=int, default=None, help="Number of folds")
    study.add_argument("--jobs", type=int, default=None, help="Parallel grid columns")
    study.add_argument("--contralateral", action="store_true", help="Include unaffected ears")
    study.add_argument("--plots", action="store_true", help="Write PC scatter and GD trace SVGs")
    study.set_defaults(handler=cmd_study)

    synth = commands.add_parser("synth", help="Write a synthetic cohort")
    synth.add_argument("out_dir")
    synth.add_argument("--spec", help="Cohort spec JSON")
    synth.add_argument("--seed", type=int, default=None)
    synth.add_argument("--n-improved", type=int, default=None)
    synth.add_argument("--n-nonimproved", type=int, default=None)
    synth.add_argument("--n-epochs", type=int, default=None)
    synth.add_argument("--contralateral", action="store_true")
    synth.set_defaults(handler=cmd_synth)

    report = commands.add_parser("report", help="Re-render tables of a study directory")
    report.add_argument("study_dir")
    report.set_defaults(handler=cmd_report)

    return parser


def _fail(error: OaeError) -> int:
    record = ErrorResponse.from_details(error.code, error.message, error.exit_code, error.details)
    sys.stderr.write(dumps(record).decode("utf-8"))
    return error.exit_code


def main(argv: Sequence[str] | None = None) -> int:

    settings = get_settings()
    parser = build_parser(settings)
    args = parser.parse_args(argv)
    debug = args.verbose or settings.debug
    logging.basicConfig(
        level=logging.DEBUG if debug else getattr(logging, settings.log_level),
        format=LOG_FORMAT,
    )

    try:
        return int(args.handler(args, settings))
    except OaeError as e:
        logger.error(f"{args.command} failed: {e.message}")
        return _fail(e)
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        return _fail(InputError(str(e), code="io-error"))


if __name__ == "__main__":
    sys.exit(main())
