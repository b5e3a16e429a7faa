import enum
import math
from dataclasses import dataclass, field
from datetime import date


class SideEnum(str, enum.Enum):

    LEFT = "left"
    RIGHT = "right"


class OutcomeEnum(str, enum.Enum):
    """Hearing outcome from index to last visit."""
    IMPROVED = "improved"
    NONIMPROVED = "nonimproved"

    @property
    def sign(self) -> int:
        return 1 if self is OutcomeEnum.IMPROVED else -1

    @classmethod
    def from_sign(cls, value: float) -> "OutcomeEnum":
        return cls.IMPROVED if value > 0 else cls.NONIMPROVED


PC_FEATURES = ("pc1", "pc2", "pc3")
ENERGY_FEATURE = "energy"


def gd_feature_name(frequency_hz: float) -> str:
    """Feature name of the group delay at one frequency, e.g. 1000 Hz -> ``gd1k``."""
    return f"gd{frequency_hz / 1000.0:g}k"


@dataclass
class Visit:

    timestamp: date
    pta: dict[int, float]
    teoae: str | None = None


@dataclass
class EarRecord:

    patient_id: str
    side: SideEnum
    affected: bool
    visits: list[Visit] = field(default_factory=list)

    @property
    def ear_id(self) -> str:
        return f"{self.patient_id}-{self.side.value}"

    @property
    def index_visit(self) -> Visit | None:
        return self.visits[0] if self.visits else None


@dataclass
class FeatureVector:
    """
    Per-ear prognosis features.

    GD entries are ``None`` where the SNR gate failed; the PCs are NaN when
    no PCA model could be fitted.
    """

    ear_id: str
    label: OutcomeEnum
    pc1: float
    pc2: float
    pc3: float
    energy: float
    gd: dict[str, float | None] = field(default_factory=dict)

    def get(self, name: str) -> float | None:

        if name in self.gd:
            return self.gd[name]
        if name in PC_FEATURES or name == ENERGY_FEATURE:
            return float(getattr(self, name))
        raise KeyError(name)

    def has_all(self, names: list[str] | tuple[str, ...]) -> bool:

        for name in names:
            value = self.get(name)
            if value is None or not math.isfinite(value):
                return False
        return True

    def as_dict(self) -> dict[str, float | None]:
        values: dict[str, float | None] = {
            "pc1": self.pc1,
            "pc2": self.pc2,
            "pc3": self.pc3,
            "energy": self.energy,
        }
        values.update(self.gd)
        return values
