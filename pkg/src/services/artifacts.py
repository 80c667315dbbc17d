"""
Run Artifacts

Every CLI run leaves a manifest.json next to its outputs recording the
command, the config snapshot, seeds, inputs with a content hash, outputs
and timestamps.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import pandas as pd

from src.core.errors import McRecError

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"

PathLike = Union[str, Path]


def _files_under(path: Path) -> List[Path]:
    if path.is_dir():
        return sorted(p for p in path.rglob("*") if p.is_file())
    return [path]


def hash_inputs(paths: Iterable[PathLike]) -> str:
    """
    SHA-256 over the relative names and bytes of every input file

    Args:
        paths: Files or directories (walked in sorted order)

    Returns:
        Hex digest
    """
    digest = hashlib.sha256()
    for root in sorted(Path(p) for p in paths):
        for file in _files_under(root):
            name = file.relative_to(root) if root.is_dir() else Path(file.name)
            digest.update(str(name).encode("utf-8") + b"\0")
            with open(file, "rb") as f:
                for block in iter(lambda: f.read(1 << 20), b""):
                    digest.update(block)
    return digest.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    started_at: str = field(default_factory=utc_now)
    finished_at: Optional[str] = None
    input_hash: Optional[str] = None

    def add_output(self, path: PathLike) -> None:
        self.outputs.append(str(path))

    def finish(self, directory: PathLike) -> Path:
        """Check every recorded output exists, then write the manifest into directory"""
        missing = [p for p in self.outputs if not Path(p).exists()]
        if missing:
            raise McRecError(f"outputs were not written: {missing}")
        existing = [p for p in self.inputs if Path(p).exists()]
        self.input_hash = hash_inputs(existing) if existing else None
        self.finished_at = utc_now()
        path = Path(directory) / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
        logger.debug("wrote %s", path)
        return path


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
