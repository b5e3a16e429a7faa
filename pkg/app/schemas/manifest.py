from datetime import date

from pydantic import Field, field_validator, model_validator

from app.core.validators import PTA_FREQUENCIES_HZ, validate_pta_threshold
from app.models.cohort import EarRecord, SideEnum, Visit
from app.schemas.common import BaseSchema

MANIFEST_VERSION = 1


class VisitSchema(BaseSchema):

    timestamp: date
    pta: dict[int, float] = Field(default_factory=dict)
    teoae: str | None = None

    @field_validator("pta")
    @classmethod
    def validate_thresholds(cls, value: dict[int, float]) -> dict[int, float]:

        for frequency, threshold in value.items():
            result = validate_pta_threshold(threshold)
            if not result.is_valid:
                raise ValueError(f"PTA at {frequency} Hz: {result.error_message}")
        return value

    def to_visit(self) -> Visit:
        return Visit(timestamp=self.timestamp, pta=dict(self.pta), teoae=self.teoae)


class EarSchema(BaseSchema):

    side: SideEnum
    affected: bool = True
    visits: list[VisitSchema] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_visit_order(self) -> "EarSchema":

        for earlier, later in zip(self.visits, self.visits[1:]):
            if later.timestamp <= earlier.timestamp:
                raise ValueError("Visit timestamps must be strictly increasing")
        return self


class PatientSchema(BaseSchema):

    patient_id: str = Field(min_length=1)
    ears: list[EarSchema] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_sides(self) -> "PatientSchema":

        sides = [ear.side for ear in self.ears]
        if len(sides) != len(set(sides)):
            raise ValueError(f"Patient {self.patient_id} lists the same ear twice")
        return self


class ManifestSchema(BaseSchema):
    """Study manifest: patients -> ears -> visits with PTA maps and recording paths."""

    version: int = MANIFEST_VERSION
    pta_frequencies_hz: list[int] = Field(default_factory=lambda: list(PTA_FREQUENCIES_HZ))
    patients: list[PatientSchema] = Field(default_factory=list)

    def to_records(self) -> list[EarRecord]:

        records: list[EarRecord] = []
        for patient in self.patients:
            for ear in patient.ears:
                records.append(
                    EarRecord(
                        patient_id=patient.patient_id,
                        side=ear.side,
                        affected=ear.affected,
                        visits=[visit.to_visit() for visit in ear.visits],
                    )
                )
        return records

    @classmethod
    def from_records(cls, records: list[EarRecord]) -> "ManifestSchema":

        patients: dict[str, PatientSchema] = {}
        for record in records:
            patient = patients.setdefault(
                record.patient_id, PatientSchema(patient_id=record.patient_id)
            )
            patient.ears.append(
                EarSchema(
                    side=record.side,
                    affected=record.affected,
                    visits=[
                        VisitSchema(timestamp=v.timestamp, pta=dict(v.pta), teoae=v.teoae)
                        for v in record.visits
                    ],
                )
            )
        return cls(patients=list(patients.values()))
