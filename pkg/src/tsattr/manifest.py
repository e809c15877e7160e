"""Run manifest: config snapshot, content digests, stage timings.

The manifest records everything needed to reproduce a run bitwise: the
resolved configuration, the sha256 of every input and output file, and the
engine version. Timings are informational and the only part expected to
differ between identical runs.
"""

from __future__ import annotations

import hashlib
import time
from pathlib import Path


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """Accumulates key = value entries; merged on re-open so stages compose."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.entries: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip() or line.startswith("#"):
                    continue
                key, _, value = line.partition("=")
                self.entries[key.strip()] = value.strip()

    def set(self, key: str, value) -> None:
        self.entries[key] = str(value)

    def record_digest(self, role: str, path: str | Path) -> None:
        self.set(f"digest.{role}.{Path(path).name}", sha256_file(path))

    def record_config(self, config_path: str | Path) -> None:
        self.record_digest("config", config_path)

    def write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{k} = {v}" for k, v in sorted(self.entries.items())]
        self.path.write_text("\n".join(lines) + "\n")


class StageTimer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest = manifest
        self.key = f"timing.{stage}_seconds"

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.set(self.key, f"{time.perf_counter() - self.start:.3f}")
