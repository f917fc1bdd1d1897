"""Weight files: one JSON manifest line, then a raw little-endian float32
payload. The manifest carries shapes, order, and a sha256 of the payload."""

from __future__ import annotations

import hashlib
import json

import numpy as np


class WeightsFormatError(ValueError):
    pass


def save_weights(path, named_arrays, extra: dict | None = None) -> str:
    """Write [(name, array)] pairs; returns the payload checksum."""
    payload = b""
    entries = []
    for name, arr in named_arrays:
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        payload += arr32.tobytes()
        entries.append({"name": name, "shape": list(arr.shape)})
    checksum = hashlib.sha256(payload).hexdigest()
    manifest = {"entries": entries, "checksum": checksum, "extra": extra or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        fh.write(payload)
    return checksum


def load_weights(path):
    """Returns (dict name -> float32 array, extra dict)."""
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    manifest = json.loads(header)
    if hashlib.sha256(payload).hexdigest() != manifest["checksum"]:
        raise WeightsFormatError(f"{path}: payload checksum mismatch")
    out = {}
    off = 0
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=off).reshape(shape)
        out[entry["name"]] = arr.copy()
        off += 4 * n
    if off != len(payload):
        raise WeightsFormatError(f"{path}: payload size mismatch")
    return out, manifest.get("extra", {})


def save_module(path, module, extra: dict | None = None) -> str:
    return save_weights(path, [(n, p.data) for n, p in module.named_parameters()], extra)


def load_module(path, module) -> dict:
    arrays, extra = load_weights(path)
    for name, param in module.named_parameters():
        if name not in arrays:
            raise WeightsFormatError(f"missing parameter {name!r} in {path}")
        if tuple(arrays[name].shape) != tuple(param.data.shape):
            raise WeightsFormatError(
                f"shape mismatch for {name!r}: file {arrays[name].shape}, model {param.data.shape}"
            )
        param.data = arrays[name].astype(param.data.dtype)
    return extra
