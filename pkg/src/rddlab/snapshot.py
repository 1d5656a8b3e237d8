"""Binary snapshots of estimator state for resumable runs.

Layout (all little-endian)::

    magic   8 bytes  b"RDDSNAP\\0"
    version u16
    tag     u8       estimator type
    meta    u32 length + UTF-8 JSON (array names/shapes, rng state, counts, ...)
    payload float64 arrays, concatenated in the order listed in meta
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from rddlab.estimator import BonusEstimator

MAGIC = b"RDDSNAP\x00"
VERSION = 1
TAGS = {"none": 0, "rdd": 1, "rnd": 2, "drnd": 3, "count": 4}
_HEADER = struct.Struct("<8sHBI")


def dumps(est: BonusEstimator) -> bytes:
    arrays, meta = est.state_dict()
    names = list(arrays)
    meta = dict(meta, arrays=[[n, list(np.shape(arrays[n]))] for n in names])
    blob = json.dumps(meta, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    return _HEADER.pack(MAGIC, VERSION, TAGS[est.kind], len(blob)) + blob + payload


def loads(est: BonusEstimator, data: bytes) -> BonusEstimator:
    """Restore ``est`` in place from ``data``; the estimator type must match."""
    magic, version, tag, meta_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError("not an estimator snapshot")
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    if tag != TAGS[est.kind]:
        kind = {v: k for k, v in TAGS.items()}.get(tag, tag)
        raise ValueError(f"snapshot holds a {kind!r} estimator, cannot load into {est.kind!r}")
    start = _HEADER.size
    meta = json.loads(data[start:start + meta_len].decode())
    offset = start + meta_len
    arrays = {}
    for name, shape in meta.pop("arrays"):
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(data):
        raise ValueError("trailing bytes in snapshot")
    est.load_state_dict(arrays, meta)
    return est


def save(est: BonusEstimator, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps(est))
    return path


def load(est: BonusEstimator, path) -> BonusEstimator:
    return loads(est, Path(path).read_bytes())
