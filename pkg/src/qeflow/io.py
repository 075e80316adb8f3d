"""Versioned JSON and CSV helpers shared by the command line and the tests.

Profile arrays are long double internally.  JSON stores them as plain numbers for
interoperability and, under ``"extended"``, as exact decimal strings so that a
written file re-ingests bit-for-bit.
"""

import json
from pathlib import Path

import numpy as np

from . import fd
from .curvature import operator_from_json, operator_to_json
from .quasi_einstein import QEStructure, structure_from_json, structure_to_json

SCHEMA_VERSION = 1
_ARRAYS = ("r", "phi", "f")

__all__ = [
    "SCHEMA_VERSION",
    "SchemaError",
    "encode_extended",
    "decode_array",
    "to_jsonable",
    "dumps",
    "write_json",
    "read_json",
    "profile_payload",
    "load_structure",
    "save_structure",
    "load_operator",
    "save_operator",
]


class SchemaError(ValueError):
    pass


def encode_extended(a):
    return [np.format_float_scientific(x, unique=True) for x in np.asarray(a, dtype=fd.DTYPE)]


def decode_array(values):
    return np.array(values, dtype=fd.DTYPE)


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(payload):
    body = {"schema_version": SCHEMA_VERSION, **to_jsonable(payload)}
    return json.dumps(body, indent=2, allow_nan=False)


def write_json(payload, path):
    text = dumps(payload)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n")
    return text


def read_json(path):
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: top level must be an object")
    version = obj.get("schema_version", SCHEMA_VERSION)
    if not isinstance(version, int) or version > SCHEMA_VERSION or version < 1:
        raise SchemaError(f"{path}: unsupported schema_version {version!r}")
    return obj


def profile_payload(q):
    d = structure_to_json(q)
    d["extended"] = {k: encode_extended(getattr(q.geom, k)) for k in _ARRAYS}
    return d


def _restore_extended(obj):
    ext = obj.get("extended")
    if not ext:
        return obj
    obj = dict(obj)
    for k in _ARRAYS:
        if k in ext:
            obj[k] = decode_array(ext[k])
    return obj


def load_structure(path, order=None, lam=None, m=None):
    """Read a profile or QE structure JSON.  ``lam``/``m`` fill in a bare profile."""
    obj = _restore_extended(read_json(path))
    if "m" not in obj:
        obj["m"] = "inf" if m is None else m
    if "lambda" not in obj:
        if lam is None:
            raise SchemaError(f"{path}: no 'lambda' field and none supplied")
        obj["lambda"] = lam
    return structure_from_json(obj, order)


def save_structure(q: QEStructure, path, extra=None):
    payload = profile_payload(q)
    if extra:
        payload.update(extra)
    return write_json(payload, path)


def load_operator(path):
    return operator_from_json(read_json(path))


def save_operator(R, path):
    return write_json(operator_to_json(R), path)
