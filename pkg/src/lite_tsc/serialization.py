"""Binary container: a JSON manifest followed by raw little-endian arrays.

Layout::

    b"LITETSC\\0"            8-byte magic
    uint64 (little-endian)   manifest length in bytes
    manifest                 UTF-8 JSON
    payload                  arrays back to back, in manifest order

Each manifest tensor entry records ``name``, ``shape``, ``dtype`` and the byte
``offset`` of the array inside the payload.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"LITETSC\0"
FORMAT_VERSION = 1
_DTYPES = {"<f4": np.dtype("<f4"), "<i4": np.dtype("<i4")}


class ContainerError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _dtype_tag(arr: np.ndarray) -> str:
    if np.issubdtype(arr.dtype, np.floating):
        return "<f4"
    if np.issubdtype(arr.dtype, np.integer):
        return "<i4"
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def encode_container(tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        tag = _dtype_tag(arr)
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag, "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format_version": FORMAT_VERSION, **meta, "tensors": entries}
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def decode_container(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if data[:8] != MAGIC:
        raise ContainerError("not a lite-tsc container (bad magic)")
    (size,) = struct.unpack("<Q", data[8:16])
    manifest = json.loads(data[16 : 16 + size].decode("utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {manifest.get('format_version')}")
    payload = memoryview(data)[16 + size :]
    tensors = {}
    for entry in manifest.pop("tensors"):
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        arr = np.frombuffer(payload[start : start + count * dtype.itemsize], dtype=dtype)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(dtype.newbyteorder("="))
    return tensors, manifest


def save_container(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    atomic_write_bytes(path, encode_container(tensors, meta))


def load_container(path) -> tuple[dict[str, np.ndarray], dict]:
    return decode_container(Path(path).read_bytes())
