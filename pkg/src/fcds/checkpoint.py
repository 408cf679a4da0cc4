"""Checkpoint container: parameter name -> shape + raw little-endian float64.

Layout: one JSON header line, then the concatenated raw values of every
parameter in header order. The header carries the seed, the optimizer step
count, and a hash of the run configuration, so a checkpoint is traceable to
the run that wrote it and byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

FORMAT_NAME = "fcds-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed or mismatched checkpoint files."""


def write_atomic(path, payload: bytes):
    """Write via a sibling temp file and rename, so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def serialize(params, seed, steps, config_hash) -> bytes:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "seed": int(seed),
        "steps": int(steps),
        "config_hash": str(config_hash),
        "params": [{"name": p.name, "shape": list(p.shape)} for p in params],
    }
    chunks = [json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"), b"\n"]
    for p in params:
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def save_checkpoint(path, params, seed, steps, config_hash):
    write_atomic(path, serialize(params, seed, steps, config_hash))


def load_checkpoint(path):
    """Return (header dict, mapping name -> float64 array)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    newline = blob.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")

    offset = newline + 1
    values = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated data for parameter {entry['name']!r}")
        values[entry["name"]] = np.frombuffer(
            blob[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return header, values
