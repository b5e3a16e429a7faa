import csv
import io
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import orjson
from pydantic import BaseModel

from app.core.exceptions import InputError

logger = logging.getLogger(__name__)

JSON_OPTIONS = (
    orjson.OPT_INDENT_2
    | orjson.OPT_SORT_KEYS
    | orjson.OPT_SERIALIZE_NUMPY
    | orjson.OPT_NON_STR_KEYS
)


class ArtifactNotFoundError(InputError):
    code = "missing-file"


class ArtifactFormatError(InputError):
    code = "malformed-file"


def dumps(payload: Any) -> bytes:
    """Stable JSON bytes: sorted keys, 2-space indent, trailing newline."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return orjson.dumps(payload, option=JSON_OPTIONS) + b"\n"


def read_json(path: Path) -> Any:

    if not path.is_file():
        raise ArtifactNotFoundError(f"File not found: {path}", path=str(path))
    try:
        return orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise ArtifactFormatError(f"Invalid JSON in {path}: {e}", path=str(path)) from e


class ArtifactRepository:
    """JSON, text and CSV artefacts of one run, stored under a root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def _target(self, name: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def save_json(self, name: str, payload: Any) -> Path:

        target = self._target(name)
        target.write_bytes(dumps(payload))
        logger.debug(f"Wrote {target}")
        return target

    def load_json(self, name: str) -> Any:

        return read_json(self.path(name))

    def save_text(self, name: str, text: str) -> Path:

        target = self._target(name)
        target.write_text(text, encoding="utf-8", newline="\n")
        return target

    def load_text(self, name: str) -> str:

        target = self.path(name)
        if not target.is_file():
            raise ArtifactNotFoundError(f"File not found: {target}", path=str(target))
        return target.read_text(encoding="utf-8")

    def save_rows(
        self,
        name: str,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> Path:

        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return self.save_text(name, buffer.getvalue())
