from pydantic import Field

from app.schemas.common import BaseSchema


class SessionDescriptorSchema(BaseSchema):
    """Sidecar JSON of a continuous WAV recording."""

    click_rate_hz: float = Field(default=10.0, gt=0)
    epoch_ms: float = Field(default=25.0, gt=0)
    calibration_pa_per_fs: float = Field(default=1.0, gt=0)
    first_click: int = Field(default=0, ge=0)
    n_clicks: int | None = Field(default=None, ge=1)
    channel: int = Field(default=0, ge=0)
    session_id: str = ""
