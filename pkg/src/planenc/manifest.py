"""Run manifests: every CLI command records what it ran, on what, and what
it produced, with content hashes, so a run can be reproduced or audited."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

FORMAT = "planenc/manifest-v1"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Collects inputs/outputs/config for one command invocation."""

    def __init__(self, command: str, seed: int | None = None,
                 config: dict | None = None):
        self.command = command
        self.seed = seed
        self.config = config or {}
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.checkpoints: dict[str, str] = {}
        self.extra: dict = {}
        self._start = time.time()

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def add_checkpoint(self, name: str, params_hash: str) -> None:
        self.checkpoints[name] = params_hash

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "checkpoints": self.checkpoints,
            "extra": self.extra,
            "wall_clock_seconds": round(time.time() - self._start, 3),
        }

    def write(self, path) -> dict:
        doc = self.to_dict()
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return doc


def load_manifest(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not a run manifest")
    return doc


def reproducibility_fields(doc: dict) -> dict:
    """The subset of a manifest that must match across identical reruns
    (everything except wall clock)."""
    out = dict(doc)
    out.pop("wall_clock_seconds", None)
    return out
