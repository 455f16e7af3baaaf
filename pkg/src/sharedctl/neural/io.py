"""Self-describing weight files: JSON header, exact base64 float64 tensors."""

from __future__ import annotations

import base64
import json
import os
import tempfile

import numpy as np

from ..errors import WeightsFormatError

FORMAT_NAME = "sharedctl-weights"
FORMAT_VERSION = 1


def save_weights(path, spec_dicts: list[dict], weights: dict, meta: dict | None = None) -> None:
    """Write weights atomically; tensors are bit-exact little-endian float64."""
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": spec_dicts,
        "meta": meta or {},
        "tensors": {
            name: {
                "shape": list(arr.shape),
                "dtype": "float64",
                "data": base64.b64encode(
                    np.ascontiguousarray(arr, dtype="<f8").tobytes()
                ).decode("ascii"),
            }
            for name, arr in sorted(weights.items())
        },
    }
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(doc, f)
            f.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_weights(path, expected_spec: list[dict] | None = None):
    """Read a weight file; returns (spec_dicts, weights, meta).

    Raises WeightsFormatError on truncation, version mismatch, or when
    expected_spec is given and the stored architecture differs.
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise WeightsFormatError(f"malformed or truncated weight file {path}: {exc}") from exc

    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise WeightsFormatError(f"{path} is not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise WeightsFormatError(
            f"unsupported weight format version {doc.get('version')!r}"
        )
    spec = doc.get("spec")
    if expected_spec is not None and spec != expected_spec:
        raise WeightsFormatError(
            "stored network spec does not match the expected architecture"
        )
    weights = {}
    for name, entry in doc.get("tensors", {}).items():
        if entry.get("dtype") != "float64":
            raise WeightsFormatError(f"tensor {name}: unsupported dtype")
        raw = base64.b64decode(entry["data"])
        shape = tuple(entry["shape"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise WeightsFormatError(f"tensor {name}: data does not match shape {shape}")
        weights[name] = arr.reshape(shape)
    return spec, weights, doc.get("meta", {})
