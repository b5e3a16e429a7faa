from typing import Any

from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):

    model_config = ConfigDict(
        from_attributes=True,
        populate_by_name=True,
    )


class ErrorDetail(BaseModel):

    field: str
    message: str


class ErrorResponse(BaseModel):
    """Machine-readable error record written by the CLI on failure."""

    code: str
    message: str
    exit_code: int
    details: list[ErrorDetail] | None = None

    @classmethod
    def from_details(
        cls, code: str, message: str, exit_code: int, details: dict[str, Any]
    ) -> "ErrorResponse":

        items = [ErrorDetail(field=key, message=str(value)) for key, value in sorted(details.items())]
        return cls(code=code, message=message, exit_code=exit_code, details=items or None)
