"""Ear labelling, per-ear feature assembly and end-to-end study runs."""
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from app.core.exceptions import InputError, OaeError
from app.core.validators import IMPROVEMENT_THRESHOLD_DB, PTA_FREQUENCIES_HZ
from app.models.cohort import (
    ENERGY_FEATURE,
    PC_FEATURES,
    EarRecord,
    FeatureVector,
    OutcomeEnum,
    Visit,
    gd_feature_name,
)
from app.repositories.base import ArtifactRepository
from app.repositories.recording import RecordingRepository
from app.schemas.report import CvRowSchema, ExclusionSchema, StudyReportSchema, WelchRowSchema
from app.schemas.study import StudyConfigSchema
from app.services.epoching import TeoaeSignal, extract_signal
from app.services.pca import PcaModel, fit_pca, project
from app.services.report import write_report_files
from app.services.spectral import spectral_features
from app.services.stats import WelchResult, welch_table
from app.services.svm import (
    CvReport,
    KernelSpec,
    LabeledDataset,
    ParameterGrid,
    SvmModel,
    grid_search_cv,
    train_svm,
)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0


class CohortError(InputError):
    code = "cohort-error"


class MissingFrequencyError(CohortError):
    code = "missing-frequency"


class MissingRecordingError(CohortError):
    code = "missing-recording"


class InsufficientVisitsError(CohortError):
    code = "insufficient-visits"


def label_ear(
    index_visit: Visit,
    last_visit: Visit,
    threshold_db: float = IMPROVEMENT_THRESHOLD_DB,
) -> OutcomeEnum:
    """
    Improved iff the threshold dropped by at least ``threshold_db`` at any
    of 500, 1000, 2000 or 3000 Hz between the two visits.

    Raises:
        MissingFrequencyError: either visit lacks one of the four frequencies
    """
    for visit in (index_visit, last_visit):
        missing = [f for f in PTA_FREQUENCIES_HZ if f not in visit.pta]
        if missing:
            raise MissingFrequencyError(
                f"Visit on {visit.timestamp} lacks PTA at {missing} Hz",
                frequencies=missing,
            )
    for frequency in PTA_FREQUENCIES_HZ:
        if index_visit.pta[frequency] - last_visit.pta[frequency] >= threshold_db:
            return OutcomeEnum.IMPROVED
    return OutcomeEnum.NONIMPROVED


def last_visit(record: EarRecord, follow_up_limit_days: int = 200) -> Visit:
    """Latest visit within the follow-up limit of the index visit."""
    if len(record.visits) < 2:
        raise InsufficientVisitsError(f"Ear {record.ear_id} has fewer than 2 visits")
    index = record.visits[0]
    within = [
        visit
        for visit in record.visits[1:]
        if (visit.timestamp - index.timestamp).days <= follow_up_limit_days
    ]
    if not within:
        raise InsufficientVisitsError(
            f"Ear {record.ear_id} has no visit within {follow_up_limit_days} days of the index visit"
        )
    return within[-1]


def label_record(record: EarRecord, follow_up_limit_days: int = 200) -> OutcomeEnum:

    return label_ear(record.visits[0], last_visit(record, follow_up_limit_days))


def feature_set_name(names: Sequence[str]) -> str:
    return "-".join(names)


@dataclass
class Exclusion:

    ear_id: str
    reason: str
    message: str = ""

    def to_schema(self) -> ExclusionSchema:
        return ExclusionSchema(ear_id=self.ear_id, reason=self.reason, message=self.message)


@dataclass
class EarSignal:

    record: EarRecord
    label: OutcomeEnum
    signal: TeoaeSignal


@dataclass
class AssembledFeatures:

    vectors: list[FeatureVector] = field(default_factory=list)
    exclusions: list[Exclusion] = field(default_factory=list)

    def to_dataset(self, names: Sequence[str]) -> tuple[LabeledDataset, list[Exclusion]]:
        """Rows of the ears that carry every named feature; the rest are reported."""
        rows: list[list[float]] = []
        labels: list[OutcomeEnum] = []
        skipped: list[Exclusion] = []
        for vector in self.vectors:
            if not vector.has_all(tuple(names)):
                missing = [n for n in names if not vector.has_all((n,))]
                reason = "pca-failed" if set(missing) & set(PC_FEATURES) else "insufficient-snr"
                skipped.append(
                    Exclusion(
                        ear_id=vector.ear_id,
                        reason=reason,
                        message=f"No {', '.join(missing)} for feature set {feature_set_name(names)}",
                    )
                )
                continue
            rows.append([float(vector.get(n)) for n in names])  # type: ignore[arg-type]
            labels.append(vector.label)
        dataset = LabeledDataset.from_labels(rows, labels, names)
        return dataset, skipped

    def grouped(self, name: str) -> tuple[list[float], list[float]]:
        """(improved, nonimproved) values of one feature, skipping undefined ones."""
        improved: list[float] = []
        nonimproved: list[float] = []
        for vector in self.vectors:
            value = vector.get(name)
            if value is None or not math.isfinite(value):
                continue
            (improved if vector.label is OutcomeEnum.IMPROVED else nonimproved).append(value)
        return improved, nonimproved


@dataclass
class StudyResult:

    report: StudyReportSchema
    features: AssembledFeatures
    pca_model: PcaModel | None
    welch: dict[str, WelchResult] = field(default_factory=dict)
    cv_reports: dict[str, CvReport] = field(default_factory=dict)
    models: dict[str, SvmModel] = field(default_factory=dict)
    signals: dict[str, TeoaeSignal] = field(default_factory=dict)


class StudyRunner:
    """
    Runs the prognosis pipeline over a manifest.

    Per ear: label, load the index-visit recording, reject artefacts, take
    the median and cut the window. Then one PCA over all ears, per-ear
    features, group statistics and one grid search per feature set.
    """

    def __init__(
        self,
        config: StudyConfigSchema | None = None,
        recordings: RecordingRepository | None = None,
    ):
        self.config = config or StudyConfigSchema()
        self.recordings = recordings or RecordingRepository()
        self._signals: dict[str, TeoaeSignal] = {}

    @property
    def seed(self) -> int:
        return self.config.seed if self.config.seed is not None else DEFAULT_SEED

    def select(self, records: Sequence[EarRecord]) -> list[EarRecord]:

        if self.config.include_contralateral:
            return list(records)
        return [record for record in records if record.affected]

    def load_signal(self, path: str) -> TeoaeSignal:
        """Denoised, windowed signal of one recording; cached by path."""
        if path not in self._signals:
            epochs = self.recordings.load_epochs(path)
            self._signals[path] = extract_signal(
                epochs,
                k=self.config.artefact_k,
                window=self.config.window_ms,
                reject=self.config.reject_artefacts,
            )
        return self._signals[path]

    def prepare(self, records: Sequence[EarRecord]) -> tuple[list[EarSignal], list[Exclusion]]:

        prepared: list[EarSignal] = []
        exclusions: list[Exclusion] = []
        for record in self.select(records):
            try:
                label = label_record(record, self.config.follow_up_limit_days)
                index = record.index_visit
                if index is None or not index.teoae:
                    raise MissingRecordingError(f"Ear {record.ear_id} has no index-visit TEOAE")
                signal = self.load_signal(index.teoae)
            except OaeError as e:
                logger.info(f"Excluding ear {record.ear_id}: {e.message}")
                exclusions.append(Exclusion(ear_id=record.ear_id, reason=e.code, message=e.message))
                continue
            prepared.append(EarSignal(record=record, label=label, signal=signal))
        return prepared, exclusions

    def fit_pca(self, ears: Sequence[EarSignal]) -> PcaModel:

        return fit_pca([ear.signal for ear in ears], self.config.pca_components)

    def features_for(self, ear: EarSignal, pca_model: PcaModel | None) -> FeatureVector:
        """Features of one ear; the PCs are NaN without a PCA model."""
        pcs = (math.nan,) * 3
        if pca_model is not None:
            pcs = project(pca_model, ear.signal).as_tuple()
        spectral = spectral_features(
            ear.signal,
            self.config.gd_frequencies_hz,
            band_halfwidth=self.config.gd_band_hz,
            nfft=self.config.nfft,
            snr_margin_db=self.config.snr_margin_db,
        )
        return FeatureVector(
            ear_id=ear.record.ear_id,
            label=ear.label,
            pc1=pcs[0],
            pc2=pcs[1],
            pc3=pcs[2],
            energy=spectral.energy,
            gd={gd_feature_name(f): value for f, value in spectral.gd.items()},
        )

    def assemble(
        self, ears: Sequence[EarSignal], pca_model: PcaModel | None
    ) -> AssembledFeatures:

        assembled = AssembledFeatures()
        for ear in ears:
            try:
                assembled.vectors.append(self.features_for(ear, pca_model))
            except OaeError as e:
                logger.info(f"Excluding ear {ear.record.ear_id}: {e.message}")
                assembled.exclusions.append(
                    Exclusion(ear_id=ear.record.ear_id, reason=e.code, message=e.message)
                )
        return assembled

    def welch_rows(self, features: AssembledFeatures) -> tuple[dict[str, WelchResult], dict[str, str]]:

        names = [*PC_FEATURES, ENERGY_FEATURE, *self.config.gd_feature_names()]
        return welch_table({name: features.grouped(name) for name in names})

    def grid(self) -> ParameterGrid:
        return ParameterGrid.log2(
            self.config.grid_log2_min, self.config.grid_log2_max, self.config.grid_log2_step
        )

    def evaluate_set(
        self, features: AssembledFeatures, names: Sequence[str]
    ) -> tuple[CvReport, SvmModel, list[Exclusion]]:
        """Grid search on one feature set, then a final model on all its rows."""
        dataset, skipped = features.to_dataset(names)
        report = grid_search_cv(
            dataset,
            self.grid(),
            k=self.config.k,
            seed=self.seed,
            coef0=self.config.coef0,
            stratified=self.config.stratified,
            n_jobs=self.config.n_jobs,
            tol=self.config.svm_tolerance,
            max_iter=self.config.svm_max_iter,
        )
        model = train_svm(
            dataset,
            report.best_c,
            KernelSpec.sigmoid(report.best_gamma, self.config.coef0),
            tol=self.config.svm_tolerance,
            max_iter=self.config.svm_max_iter,
        )
        return report, model, skipped

    def run(self, records: Sequence[EarRecord]) -> StudyResult:

        if self.config.seed is None:
            logger.info(f"No seed configured; using {DEFAULT_SEED}")
        ears, exclusions = self.prepare(records)
        pca_model: PcaModel | None = None
        pca_failure: str | None = None
        if ears:
            try:
                pca_model = self.fit_pca(ears)
            except OaeError as e:
                logger.warning(f"PCA not fitted, PC features left undefined: {e.message}")
                pca_failure = e.code
        features = self.assemble(ears, pca_model)
        exclusions.extend(features.exclusions)

        welch, welch_failures = self.welch_rows(features)
        if pca_failure is not None:
            welch_failures.update({name: pca_failure for name in PC_FEATURES})
        result = StudyResult(
            report=StudyReportSchema(n_ears=0, n_improved=0, n_nonimproved=0, config=self.config),
            features=features,
            pca_model=pca_model,
            welch=welch,
            signals={ear.record.ear_id: ear.signal for ear in ears},
        )

        cv_rows: list[CvRowSchema] = []
        cv_failures: dict[str, str] = {}
        for names in self.config.feature_sets:
            set_name = feature_set_name(names)
            if pca_failure is not None and set(names) & set(PC_FEATURES):
                cv_failures[set_name] = pca_failure
                continue
            try:
                report, model, skipped = self.evaluate_set(features, names)
            except OaeError as e:
                logger.warning(f"Feature set {set_name} not evaluated: {e.message}")
                cv_failures[set_name] = e.code
                continue
            exclusions.extend(skipped)
            result.cv_reports[set_name] = report
            result.models[set_name] = model
            cv_rows.append(
                CvRowSchema(
                    parameters=list(names),
                    accuracy_pct=100.0 * report.mean_accuracy,
                    c=report.best_c,
                    gamma=report.best_gamma,
                    fold_accuracies=report.fold_accuracies,
                    n_rows=report.n_rows,
                    model_file=f"svm_{set_name}.json",
                    cv_file=f"cv_{set_name}.json",
                )
            )

        labels = [vector.label for vector in features.vectors]
        result.report = StudyReportSchema(
            n_ears=len(labels),
            n_improved=sum(label is OutcomeEnum.IMPROVED for label in labels),
            n_nonimproved=sum(label is OutcomeEnum.NONIMPROVED for label in labels),
            seed=self.seed,
            welch=[_welch_row(name, res) for name, res in welch.items()],
            welch_failures=welch_failures,
            cv=cv_rows,
            cv_failures=cv_failures,
            exclusions=[exclusion.to_schema() for exclusion in exclusions],
            pca_failure=pca_failure,
            pca_explained_variance=(
                pca_model.explained_variance_ratio.tolist() if pca_model is not None else []
            ),
            config=self.config,
        )
        logger.info(
            f"Study finished: {result.report.n_ears} ears, {len(cv_rows)} feature sets, "
            f"{len(exclusions)} exclusions"
        )
        return result


def _welch_row(name: str, result: WelchResult) -> WelchRowSchema:
    return WelchRowSchema(
        parameter=name,
        t=result.t,
        df=result.df,
        p=result.p,
        mean_improved=result.mean_a,
        sd_improved=result.sd_a,
        n_improved=result.n_a,
        mean_nonimproved=result.mean_b,
        sd_nonimproved=result.sd_b,
        n_nonimproved=result.n_b,
    )


def assemble_features(
    records: Sequence[EarRecord],
    pca_model: PcaModel | None = None,
    config: StudyConfigSchema | None = None,
    recordings: RecordingRepository | None = None,
) -> tuple[AssembledFeatures, PcaModel | None]:
    """
    One feature vector per eligible ear from its index-visit recording.

    Without a PCA model one is fitted on the loaded ears. Ears that cannot
    be labelled or loaded end up in the exclusions.
    """
    runner = StudyRunner(config, recordings)
    ears, exclusions = runner.prepare(records)
    if pca_model is None and ears:
        pca_model = runner.fit_pca(ears)
    features = runner.assemble(ears, pca_model)
    features.exclusions[:0] = exclusions
    return features, pca_model


def persist_study(result: StudyResult, out_dir: str | Path) -> ArtifactRepository:
    """Write models, CV reports, the study report and its tables under ``out_dir``."""
    artifacts = ArtifactRepository(out_dir)
    if result.pca_model is not None:
        artifacts.save_json("pca_model.json", result.pca_model.to_dict())
    for set_name, model in result.models.items():
        artifacts.save_json(f"svm_{set_name}.json", model.to_dict())
    for set_name, report in result.cv_reports.items():
        artifacts.save_json(f"cv_{set_name}.json", report.to_dict())
    artifacts.save_json("study_report.json", result.report)
    write_report_files(result.report, artifacts, features=result.features.vectors)
    return artifacts


def run_study(
    records: Sequence[EarRecord],
    config: StudyConfigSchema | None = None,
    recordings: RecordingRepository | None = None,
    out_dir: str | Path | None = None,
) -> StudyResult:
    """Run the whole study and, with ``out_dir``, persist every artefact."""
    result = StudyRunner(config, recordings).run(records)
    if out_dir is not None:
        persist_study(result, out_dir)
    return result
