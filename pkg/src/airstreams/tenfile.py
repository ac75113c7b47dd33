"""Reader/writer for the ".ten" binary tensor file format.

Layout: bytes 0-3 magic "TENS", byte 4 version (1), byte 5 dtype code
(0 = f32, 1 = f64, 2 = i32), byte 6 ndim, then ndim little-endian u32 dims,
then the row-major payload in little-endian order.
"""

import struct

import numpy as np

from .errors import InputError

MAGIC = b"TENS"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<i4"): 2,
}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i4")}


def write_ten(path, array):
    """Write a numpy array (f32/f64/i32) to `path` in .ten format."""
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _DTYPE_CODES:
        if np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype("<f4")
        elif np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype("<i4")
        else:
            raise InputError(f"unsupported dtype for .ten file: {arr.dtype}")
    if arr.ndim > 255:
        raise InputError("too many dimensions for .ten file")
    header = MAGIC + struct.pack("<BBB", VERSION, _DTYPE_CODES[arr.dtype], arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_ten(path):
    """Read a .ten file back into a numpy array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 7 or raw[:4] != MAGIC:
        raise InputError(f"{path}: not a .ten file (bad magic)")
    version, dtype_code, ndim = struct.unpack("<BBB", raw[4:7])
    if version != VERSION:
        raise InputError(f"{path}: unsupported .ten version {version}")
    if dtype_code not in _CODE_DTYPES:
        raise InputError(f"{path}: unknown dtype code {dtype_code}")
    offset = 7
    dims = struct.unpack(f"<{ndim}I", raw[offset : offset + 4 * ndim])
    offset += 4 * ndim
    dtype = _CODE_DTYPES[dtype_code]
    count = int(np.prod(dims)) if ndim else 1
    payload = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if payload.size != count:
        raise InputError(f"{path}: truncated payload")
    return payload.reshape(dims).copy()
