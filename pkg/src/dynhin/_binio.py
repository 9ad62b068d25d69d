"""Shared versioned binary container used by caches and checkpoints.

Layout: 4-byte magic, uint32 version, uint32 header length, UTF-8 JSON
header (sorted keys), then the raw array payloads concatenated in header
order. Writing the same logical content always produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Sequence

import numpy as np

from .errors import DataError

_DTYPES = {"float64": np.float64, "int64": np.int64}


def write_container(
    path: str,
    magic: bytes,
    version: int,
    meta: dict,
    arrays: Sequence[tuple[str, np.ndarray]],
) -> None:
    assert len(magic) == 4
    blocks = []
    payloads = []
    for name, arr in arrays:
        if arr.dtype == np.float64:
            dtype = "float64"
        elif arr.dtype == np.int64:
            dtype = "int64"
        else:
            raise ValueError(f"unsupported array dtype {arr.dtype} for block {name!r}")
        blocks.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payloads.append(np.ascontiguousarray(arr).tobytes())
    header = dict(meta)
    header["blocks"] = blocks
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", version, len(header_bytes)))
        fh.write(header_bytes)
        for payload in payloads:
            fh.write(payload)


def read_container(
    path: str, magic: bytes, version: int
) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        got_magic = fh.read(4)
        if got_magic != magic:
            raise DataError(f"{path}: bad magic {got_magic!r}, expected {magic!r}")
        raw = fh.read(8)
        if len(raw) != 8:
            raise DataError(f"{path}: truncated header")
        got_version, header_len = struct.unpack("<II", raw)
        if got_version != version:
            raise DataError(f"{path}: unsupported version {got_version}, expected {version}")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: corrupt header: {exc}") from None
        arrays = {}
        for block in header.pop("blocks", []):
            dtype = _DTYPES[block["dtype"]]
            shape = tuple(block["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * dtype().itemsize)
            if len(buf) != count * dtype().itemsize:
                raise DataError(f"{path}: truncated payload for block {block['name']!r}")
            arrays[block["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
        return header, arrays
