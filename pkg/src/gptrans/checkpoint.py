"""Single-file checkpoint format.

Layout: magic ``GPTCKPT1``, an 8-byte little-endian manifest length, the
manifest (JSON list of ``{name, shape, dtype}`` in write order), then the
raw little-endian value blocks concatenated in the same order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"GPTCKPT1"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray]) -> None:
    entries = []
    blocks = []
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr)
        le = arr.dtype.newbyteorder("<")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": le.str})
        blocks.append(arr.astype(le, copy=False).tobytes())
    manifest = json.dumps(entries).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for block in blocks:
            fh.write(block)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        entries = json.loads(fh.read(mlen).decode("utf-8"))
        out: dict[str, np.ndarray] = {}
        for entry in entries:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated block for {entry['name']}")
            out[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return out
