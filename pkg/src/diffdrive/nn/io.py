"""Versioned binary parameter files.

Layout (little-endian): magic 'DDNP' | major u16 | minor u16 | count u32 |
per entry: name_len u16, name utf-8, dtype u8, ndim u8, shape u32*ndim |
raw array payloads in entry order | crc32 of payload u32.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from pathlib import Path

import numpy as np

from ..errors import LoadError
from .params import ParamStore

MAGIC = b"DDNP"
VERSION_MAJOR = 1
VERSION_MINOR = 1

_DTYPES = {0: "<f8", 1: "<f4"}
_DTYPE_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}


def save_params(store: ParamStore, path, minor_version: int = VERSION_MINOR) -> None:
    path = Path(path)
    header = bytearray()
    header += MAGIC
    header += struct.pack("<HHI", VERSION_MAJOR, minor_version, len(store))
    payload = bytearray()
    for name, arr in store.items():
        raw = name.encode("utf-8")
        code = _DTYPE_CODES[np.dtype(arr.dtype)]
        header += struct.pack("<H", len(raw)) + raw
        header += struct.pack("<BB", code, arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload += arr.astype(_DTYPES[code]).tobytes(order="C")
    blob = bytes(header) + bytes(payload) + struct.pack("<I", zlib.crc32(bytes(payload)))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def load_params(path) -> ParamStore:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise LoadError(f"cannot read parameter file {path}: {e}") from e

    def take(fmt: str, offset: int):
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise LoadError(f"{path}: truncated parameter file")
        return struct.unpack_from(fmt, blob, offset), offset + size

    if blob[:4] != MAGIC:
        raise LoadError(f"{path}: not a parameter file (bad magic)")
    (major, minor, count), off = take("<HHI", 4)
    if major != VERSION_MAJOR:
        raise LoadError(f"{path}: unsupported major version {major} (expected {VERSION_MAJOR})")
    if minor > VERSION_MINOR:
        raise LoadError(f"{path}: minor version {minor} is newer than supported {VERSION_MINOR}")
    if minor < VERSION_MINOR:
        warnings.warn(f"{path}: parameter file from older minor version {minor}, loading anyway")

    entries = []
    for _ in range(count):
        (name_len,), off = take("<H", off)
        if off + name_len > len(blob):
            raise LoadError(f"{path}: truncated parameter file")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (code, ndim), off = take("<BB", off)
        if code not in _DTYPES:
            raise LoadError(f"{path}: unknown dtype code {code}")
        shape, off = take(f"<{ndim}I", off)
        entries.append((name, code, shape))

    payload_start = off
    store = ParamStore()
    for name, code, shape in entries:
        dtype = np.dtype(_DTYPES[code])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if off + nbytes > len(blob) - 4:
            raise LoadError(f"{path}: truncated parameter payload at {name!r}")
        arr = np.frombuffer(blob[off : off + nbytes], dtype=dtype).reshape(shape)
        store.register(name, arr.astype(float))
        off += nbytes
    (crc,), off_end = take("<I", off)
    if off_end != len(blob):
        raise LoadError(f"{path}: trailing bytes after payload")
    if crc != zlib.crc32(blob[payload_start:off]):
        raise LoadError(f"{path}: payload checksum mismatch")
    return store
