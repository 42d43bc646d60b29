"""Writer for the staterank blob format.

Implemented against the documented on-disk layout (the format is the only
coupling to the ranking toolkit): 24-byte header with magic ``SPRK``,
format version u16, rank u16, dims u32[4] (trailing zeros), then the raw
little-endian float32 payload in C order and a CRC32 of the payload.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"SPRK"
BLOB_VERSION = 1
_HEADER = struct.Struct("<4sHH4I")


def write_blob(path: Path | str, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    if not 1 <= array.ndim <= 4:
        raise ValueError(f"{path}: blob rank {array.ndim} outside [1, 4]")
    dims = list(array.shape) + [0] * (4 - array.ndim)
    payload = array.tobytes(order="C")
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(
        _HEADER.pack(MAGIC, BLOB_VERSION, array.ndim, *dims)
        + payload
        + struct.pack("<I", crc)
    )
