"""Versioned on-disk format for trained scorer models.

A model file is a NumPy ``.npz`` archive holding

    __format_version__   0-d int array, currently 1
    __kind__             0-d unicode array, one of wordclass/wordcount/wordmle/pathrank
    __meta__             0-d unicode array with a JSON object (sorted keys)
    <name>               any number of plain numeric or unicode arrays

No pickled objects are stored, so files load with ``allow_pickle=False``.
"""
import hashlib
import json

import numpy as np

from .errors import FormatError

FORMAT_VERSION = 1
_RESERVED = ("__format_version__", "__kind__", "__meta__")


def _canonical_meta(meta):
    return json.dumps(meta, sort_keys=True, separators=(",", ":"))


def save_model(path, kind, arrays, meta):
    payload = {name: np.asarray(value) for name, value in arrays.items()}
    for name in _RESERVED:
        if name in payload:
            raise ValueError(f"array name {name} is reserved")
    payload["__format_version__"] = np.array(FORMAT_VERSION)
    payload["__kind__"] = np.array(kind)
    payload["__meta__"] = np.array(_canonical_meta(meta))
    with open(path, "wb") as handle:
        np.savez(handle, **payload)


def load_model(path, kind):
    """read a model file written by save_model; returns (arrays, meta)"""
    with np.load(path, allow_pickle=False) as archive:
        names = set(archive.files)
        if not set(_RESERVED) <= names:
            raise FormatError(path, 0, "not a triplescore model file")
        version = int(archive["__format_version__"])
        if version != FORMAT_VERSION:
            raise FormatError(
                path, 0, f"unsupported model format version {version}"
            )
        found = str(archive["__kind__"])
        if found != kind:
            raise FormatError(path, 0, f"expected a {kind} model, found {found}")
        meta = json.loads(str(archive["__meta__"]))
        arrays = {n: archive[n] for n in sorted(names - set(_RESERVED))}
    return arrays, meta


def model_hash(kind, arrays, meta):
    """SHA-256 over kind, canonical meta and every array's name, dtype, shape and bytes"""
    digest = hashlib.sha256()
    digest.update(kind.encode("utf-8"))
    digest.update(_canonical_meta(meta).encode("utf-8"))
    for name in sorted(arrays):
        value = np.ascontiguousarray(arrays[name])
        digest.update(name.encode("utf-8"))
        digest.update(str(value.dtype).encode("utf-8"))
        digest.update(str(value.shape).encode("utf-8"))
        digest.update(value.tobytes())
    return digest.hexdigest()
