"""Checkpoint i/o: versioned JSON header + little-endian float64 parameter block.

Layout: a single UTF-8 JSON line (header), a newline, then the raw
concatenation of all parameters in header order as little-endian float64.
Byte-stable across platforms.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import ArchitectureMismatch
from .layers import Module

FORMAT = "planenc/checkpoint-v1"


def _param_entries(module: Module) -> list[tuple[str, np.ndarray]]:
    entries = [(name, p.data) for name, p in module.named_parameters()]
    entries.extend((f"buffer:{name}", np.asarray(b, dtype=float))
                   for name, b in module.named_buffers())
    return entries


def params_hash(module: Module) -> str:
    h = hashlib.sha256()
    for name, data in _param_entries(module):
        h.update(name.encode())
        h.update(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | Path, module: Module, architecture: dict,
                    extra: dict | None = None) -> dict:
    entries = _param_entries(module)
    header = {
        "format": FORMAT,
        "architecture": architecture,
        "params": [{"name": n, "shape": list(d.shape)} for n, d in entries],
        "params_sha256": params_hash(module),
    }
    if extra:
        header.update(extra)
    blob = b"".join(np.ascontiguousarray(d, dtype="<f8").tobytes()
                    for _, d in entries)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode())
        f.write(b"\n")
        f.write(blob)
    return header


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
    if header.get("format") != FORMAT:
        raise ArchitectureMismatch(f"{path}: not a checkpoint file")
    return header


def load_checkpoint(path: str | Path, module: Module) -> dict:
    """Load parameters into an already-constructed module; shapes must match."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        blob = f.read()
    if header.get("format") != FORMAT:
        raise ArchitectureMismatch(f"{path}: not a checkpoint file")
    entries = _param_entries(module)
    declared = header["params"]
    if len(declared) != len(entries):
        raise ArchitectureMismatch(
            f"checkpoint has {len(declared)} parameters, model has {len(entries)}")
    offset = 0
    for (name, data), meta in zip(entries, declared):
        if list(data.shape) != meta["shape"] or name != meta["name"]:
            raise ArchitectureMismatch(
                f"parameter {name}{list(data.shape)} vs "
                f"checkpoint {meta['name']}{meta['shape']}")
        n = int(np.prod(meta["shape"])) if meta["shape"] else 1
        chunk = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        if name.startswith("buffer:"):
            module.set_buffer(name[len("buffer:"):],
                              chunk.reshape(data.shape).copy())
        else:
            data[...] = chunk.reshape(data.shape)
        offset += n * 8
    return header
