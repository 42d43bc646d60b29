"""Checksummed binary array blobs.

Each array lives in one file: a fixed 24-byte header (magic ``SPRK``,
format version u16, rank u16, dims u32[4] with trailing zeros), a raw
little-endian float32 payload in C order, and a trailing CRC32 (u32,
little-endian) of the payload. Parseable from any language; truncation
and corruption are both detectable.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"SPRK"
BLOB_VERSION = 1
MAX_RANK = 4
_HEADER = struct.Struct("<4sHH4I")
HEADER_SIZE = _HEADER.size  # 24 bytes


class BlobFormatError(Exception):
    """Raised when a blob file is malformed, truncated or corrupted."""


def blob_size(shape: tuple[int, ...]) -> int:
    """On-disk size in bytes of a blob holding a float32 array of `shape`."""
    n = 1
    for d in shape:
        n *= int(d)
    return HEADER_SIZE + 4 * n + 4


def write_blob(path: Path | str, array: np.ndarray) -> None:
    path = Path(path)
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim < 1 or array.ndim > MAX_RANK:
        raise BlobFormatError(f"{path}: rank {array.ndim} outside [1, {MAX_RANK}]")
    dims = list(array.shape) + [0] * (MAX_RANK - array.ndim)
    payload = array.tobytes(order="C")
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    header = _HEADER.pack(MAGIC, BLOB_VERSION, array.ndim, *dims)
    path.write_bytes(header + payload + struct.pack("<I", crc))


def read_blob(path: Path | str) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise BlobFormatError(f"{path}: blob file missing") from None
    if len(raw) < HEADER_SIZE:
        raise BlobFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, rank, *dims = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BlobFormatError(f"{path}: bad magic {magic!r}")
    if version != BLOB_VERSION:
        raise BlobFormatError(f"{path}: unsupported blob version {version}")
    if rank < 1 or rank > MAX_RANK:
        raise BlobFormatError(f"{path}: invalid rank {rank}")
    shape = tuple(dims[:rank])
    if any(d <= 0 for d in shape):
        raise BlobFormatError(f"{path}: invalid dims {shape}")
    expected = blob_size(shape)
    if len(raw) != expected:
        raise BlobFormatError(
            f"{path}: size {len(raw)} does not match expected {expected} bytes"
        )
    payload = raw[HEADER_SIZE:-4]
    (crc_stored,) = struct.unpack_from("<I", raw, len(raw) - 4)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise BlobFormatError(
            f"{path}: checksum mismatch (stored {crc_stored:#010x}, computed {crc:#010x})"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
