from app.repositories.base import (
    ArtifactFormatError,
    ArtifactNotFoundError,
    ArtifactRepository,
)
from app.repositories.recording import RecordingRepository

__all__ = [
    "ArtifactFormatError",
    "ArtifactNotFoundError",
    "ArtifactRepository",
    "RecordingRepository",
]
