"""Run manifests, checksums and atomic artifact writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union

from .errors import ParseError, SchemaError

PathLike = Union[str, Path]


def sha256_file(filepath: PathLike) -> str:
    """Hex SHA-256 digest of a local file."""
    sha256 = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            sha256.update(chunk)
    return sha256.hexdigest()


@contextmanager
def atomic_write(path: PathLike, mode: str = "w") -> Iterator:
    """
    Open a temp file next to ``path`` and rename it into place on success.

    A failure inside the block leaves any existing ``path`` untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": ""})) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seed: Optional[int]
    tool_version: str
    dataset_sha256: Optional[str] = None
    model_sha256: Optional[str] = None
    outputs: dict[str, str] = field(default_factory=dict)

    def record_output(self, path: PathLike) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def save(self, path: PathLike) -> None:
        with atomic_write(path) as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path: PathLike) -> "RunManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ParseError(f"Could not read manifest {path}: {e}") from e
        missing = {"command", "argv", "config", "seed", "tool_version"} - payload.keys()
        if missing:
            raise SchemaError(f"Manifest {path} lacks keys: {', '.join(sorted(missing))}")
        return cls(**{k: payload.get(k) for k in cls.__dataclass_fields__ if k in payload})

    def mismatched_outputs(self) -> list[str]:
        """Recorded outputs whose current checksum differs (or that are gone)."""
        bad = []
        for path, digest in self.outputs.items():
            if not Path(path).exists() or sha256_file(path) != digest:
                bad.append(path)
        return bad
