"""Binary tensor files: b"WDFQTNSR", u32 rank, rank x u64 extents, f64 LE payload."""
import struct

import numpy as np

from .errors import TensorFileError

MAGIC = b"WDFQTNSR"


def dumps(array):
    a = np.ascontiguousarray(array, dtype="<f8")
    if not 1 <= a.ndim <= 4:
        raise TensorFileError(f"tensor rank must be 1..4, got {a.ndim}")
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + a.tobytes()


def loads(blob):
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise TensorFileError("bad magic: not a WDFQTNSR tensor file")
    (rank,) = struct.unpack_from("<I", blob, 8)
    if not 1 <= rank <= 4:
        raise TensorFileError(f"tensor rank must be 1..4, got {rank}")
    offset = 12 + 8 * rank
    if len(blob) < offset:
        raise TensorFileError("truncated tensor header")
    shape = struct.unpack_from(f"<{rank}Q", blob, 12)
    count = int(np.prod(shape))
    if len(blob) != offset + 8 * count:
        raise TensorFileError(
            f"payload holds {(len(blob) - offset) / 8:g} values, header says {count}")
    return np.frombuffer(blob, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)


def save(path, array):
    with open(path, "wb") as fh:
        fh.write(dumps(array))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
