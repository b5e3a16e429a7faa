"""Markdown and CSV renderings of a study report and of per-signal features."""
import csv
import io
from collections.abc import Sequence

from app.models.cohort import ENERGY_FEATURE, PC_FEATURES, FeatureVector, OutcomeEnum
from app.repositories.base import ArtifactFormatError, ArtifactRepository
from app.schemas.report import StudyReportSchema
from app.services.spectral import SpectralFeatures

TABLE1_COLUMNS = (
    "parameter",
    "t",
    "df",
    "p",
    "mean_improved",
    "sd_improved",
    "n_improved",
    "mean_nonimproved",
    "sd_nonimproved",
    "n_nonimproved",
)
TABLE2_COLUMNS = ("parameters", "accuracy_pct", "c", "gamma", "n_rows")
STATUS_OK = "ok"
STATUS_INSUFFICIENT_SNR = "insufficient-snr"


def display_name(name: str) -> str:
    """Table label of one feature."""
    if name in PC_FEATURES:
        return name.upper()
    if name == ENERGY_FEATURE:
        return "Energy"
    if name.startswith("gd") and name.endswith("k"):
        return f"GD at {name[2:-1]} kHz"
    return name


def display_set(names: Sequence[str]) -> str:

    if list(names) == list(PC_FEATURES):
        return "(PC1, PC2, PC3)"
    return " + ".join(display_name(name) for name in names)


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def render_markdown(report: StudyReportSchema) -> str:

    lines = [
        "# TEOAE prognosis study",
        "",
        f"Ears analysed: {report.n_ears} ({report.n_improved} improved, "
        f"{report.n_nonimproved} nonimproved). Seed: {report.seed}.",
        "",
        "## Group comparison (Welch's t-test)",
        "",
        "| Parameter | t | p | Improved (mean ± SD) | Nonimproved (mean ± SD) |",
        "|---|---|---|---|---|",
    ]
    for row in report.welch:
        lines.append(
            f"| {display_name(row.parameter)} | {row.t:.2f} | {row.p:.3f} "
            f"| {row.mean_improved:.3g} ± {row.sd_improved:.3g} (n={row.n_improved}) "
            f"| {row.mean_nonimproved:.3g} ± {row.sd_nonimproved:.3g} (n={row.n_nonimproved}) |"
        )
    for name, code in sorted(report.welch_failures.items()):
        lines.append(f"| {display_name(name)} | n/a | n/a | {code} | |")

    lines += [
        "",
        f"## Prognosis accuracy ({report.config.k}-fold cross-validation)",
        "",
        "| Parameters | Accuracy (%) | C | γ |",
        "|---|---|---|---|",
    ]
    for cv in report.cv:
        lines.append(
            f"| {display_set(cv.parameters)} | {cv.accuracy_pct:.1f} | {cv.c:.3g} | {cv.gamma:.3g} |"
        )
    for name, code in sorted(report.cv_failures.items()):
        lines.append(f"| {name} | n/a | {code} | |")

    if report.pca_explained_variance:
        shares = ", ".join(f"{100.0 * v:.1f}%" for v in report.pca_explained_variance)
        lines += ["", f"PCA explained variance: {shares}."]
    elif report.pca_failure:
        lines += ["", f"PCA not fitted ({report.pca_failure}); PC features are undefined."]

    if report.exclusions:
        lines += ["", "## Exclusions", ""]
        for exclusion in report.exclusions:
            detail = f": {exclusion.message}" if exclusion.message else ""
            lines.append(f"- {exclusion.ear_id} ({exclusion.reason}){detail}")

    return "\n".join(lines) + "\n"


def table1_rows(report: StudyReportSchema) -> list[list[str]]:

    return [
        [
            row.parameter,
            _cell(row.t),
            _cell(row.df),
            _cell(row.p),
            _cell(row.mean_improved),
            _cell(row.sd_improved),
            str(row.n_improved),
            _cell(row.mean_nonimproved),
            _cell(row.sd_nonimproved),
            str(row.n_nonimproved),
        ]
        for row in report.welch
    ]


def table2_rows(report: StudyReportSchema) -> list[list[str]]:

    return [
        [" ".join(cv.parameters), _cell(cv.accuracy_pct), _cell(cv.c), _cell(cv.gamma), str(cv.n_rows)]
        for cv in report.cv
    ]


def feature_rows(vectors: Sequence[FeatureVector], gd_names: Sequence[str]) -> list[list[str]]:

    rows: list[list[str]] = []
    for vector in vectors:
        gd_values = [vector.gd.get(name) for name in gd_names]
        status = STATUS_OK if all(v is not None for v in gd_values) else STATUS_INSUFFICIENT_SNR
        rows.append(
            [
                vector.ear_id,
                vector.label.value,
                _cell(vector.pc1),
                _cell(vector.pc2),
                _cell(vector.pc3),
                _cell(vector.energy),
                *[_cell(v) for v in gd_values],
                status,
            ]
        )
    return rows


def signal_feature_rows(
    entries: Sequence[tuple[str, SpectralFeatures]], gd_names: Sequence[str], frequencies: Sequence[float]
) -> list[list[str]]:
    """One row per signal file: energy, GD per frequency and a status flag."""
    rows: list[list[str]] = []
    for source, features in entries:
        gd_values = [features.gd.get(float(f)) for f in frequencies]
        status = STATUS_OK if all(v is not None for v in gd_values) else STATUS_INSUFFICIENT_SNR
        rows.append([source, _cell(features.energy), *[_cell(v) for v in gd_values], status])
    return rows


def write_report_files(
    report: StudyReportSchema,
    artifacts: ArtifactRepository,
    features: Sequence[FeatureVector] | None = None,
) -> None:
    """report.md, table1.csv, table2.csv and, with features, features.csv."""
    artifacts.save_text("report.md", render_markdown(report))
    artifacts.save_rows("table1.csv", TABLE1_COLUMNS, table1_rows(report))
    artifacts.save_rows("table2.csv", TABLE2_COLUMNS, table2_rows(report))
    if features is not None:
        gd_names = report.config.gd_feature_names()
        artifacts.save_rows(
            "features.csv",
            ("ear_id", "label", *PC_FEATURES, ENERGY_FEATURE, *gd_names, "status"),
            feature_rows(features, gd_names),
        )


def read_feature_vectors(artifacts: ArtifactRepository, name: str = "features.csv") -> list[FeatureVector]:
    """Feature vectors back from a persisted features table; empty cells are undefined GDs."""
    reader = csv.DictReader(io.StringIO(artifacts.load_text(name)))
    fixed = {"ear_id", "label", *PC_FEATURES, ENERGY_FEATURE, "status"}
    vectors: list[FeatureVector] = []
    try:
        for row in reader:
            vectors.append(
                FeatureVector(
                    ear_id=row["ear_id"],
                    label=OutcomeEnum(row["label"]),
                    pc1=float(row["pc1"]),
                    pc2=float(row["pc2"]),
                    pc3=float(row["pc3"]),
                    energy=float(row[ENERGY_FEATURE]),
                    gd={
                        key: float(value) if value else None
                        for key, value in row.items()
                        if key not in fixed
                    },
                )
            )
    except (KeyError, ValueError) as e:
        raise ArtifactFormatError(f"Malformed features table {name}: {e}", path=name) from e
    return vectors
