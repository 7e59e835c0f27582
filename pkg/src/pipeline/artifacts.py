# src/pipeline/artifacts.py

"""
Artifact emission: CSV tables through pandas and schema-versioned JSON
summaries. Output is deterministic for identical inputs.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd

from src.pipeline.data_validation import SCHEMA_VERSION
from src.utils.exceptions import ArtifactIOError
from src.utils.logging import get_logger

logger = get_logger(__name__)

CSV_FLOAT_FORMAT = "%.10g"


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


class ArtifactWriter:
    """
    Writes artifacts below one output directory.

    Attributes:
        out_dir (Path): Target directory, created on first write.
        written (List[Path]): Files written so far, in order.
    """

    def __init__(self, out_dir: Union[str, Path]) -> None:
        self.out_dir = Path(out_dir)
        self.written: List[Path] = []

    def _target(self, name: str) -> Path:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactIOError(f"cannot create output directory {self.out_dir}: {exc}") from exc
        return self.out_dir / name

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self._target(name)
        try:
            frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        except OSError as exc:
            raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
        self.written.append(path)
        logger.info("artifact_written", path=str(path), rows=len(frame))
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """Writes ``payload`` with a leading ``schema_version`` key."""
        path = self._target(name)
        document = {"schema_version": SCHEMA_VERSION}
        document.update(_jsonable(payload))
        try:
            path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as exc:
            raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
        self.written.append(path)
        logger.info("artifact_written", path=str(path))
        return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
