"""Little-endian array container shared by datasets and checkpoints.

Array section: u32 array count, then per array a u16 name length and UTF-8
name, a u8 dtype code (0 = f64, 1 = i64), a u8 rank, rank u64 dimensions
and the raw data. Dataset files prefix the section with ``MDK1``.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from common.exceptions import DatasetFormatError

DATASET_MAGIC = b"MDK1"

DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
DTYPE_CODES = {"f": 0, "i": 1, "u": 1, "b": 1}


def _dtype_code(array: np.ndarray) -> int:
    try:
        return DTYPE_CODES[array.dtype.kind]
    except KeyError:
        raise DatasetFormatError(f"cannot store arrays of dtype {array.dtype}")


def encode_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    chunks = [struct.pack("<I", len(arrays))]
    for name, array in arrays.items():
        array = np.asarray(array)
        code = _dtype_code(array)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=DTYPES[code]).tobytes())
    return b"".join(chunks)


def _read(stream: BinaryIO, size: int, what: str, error) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise error(f"truncated {what}")
    return data


def read_array_section(
    path: str | Path, offset: int, error=DatasetFormatError, lazy: bool = True
) -> dict[str, np.ndarray]:
    """Arrays of the section starting at ``offset``.

    With ``lazy`` the arrays are read-only memory maps; only headers are
    read up front.
    """
    path = Path(path)
    file_size = path.stat().st_size
    headers = []
    with open(path, "rb") as stream:
        stream.seek(offset)
        (count,) = struct.unpack("<I", _read(stream, 4, "array count", error))
        for _ in range(count):
            (name_length,) = struct.unpack("<H", _read(stream, 2, "array header", error))
            name = _read(stream, name_length, "array name", error).decode("utf-8")
            code, rank = struct.unpack("<BB", _read(stream, 2, f"header of '{name}'", error))
            if code not in DTYPES:
                raise error(f"array '{name}' has unknown dtype code {code}")
            shape = struct.unpack(
                f"<{rank}Q", _read(stream, 8 * rank, f"shape of '{name}'", error)
            )
            start = stream.tell()
            nbytes = DTYPES[code].itemsize * int(np.prod(shape, dtype=np.int64))
            if start + nbytes > file_size:
                raise error(f"truncated array '{name}'")
            headers.append((name, DTYPES[code], tuple(int(s) for s in shape), start))
            stream.seek(start + nbytes)

    arrays = {}
    for name, dtype, shape, start in headers:
        if int(np.prod(shape, dtype=np.int64)) == 0:
            arrays[name] = np.zeros(shape, dtype=dtype)
        elif lazy:
            arrays[name] = np.memmap(path, dtype=dtype, mode="r", offset=start, shape=shape)
        else:
            arrays[name] = np.array(
                np.memmap(path, dtype=dtype, mode="r", offset=start, shape=shape)
            )
    return arrays


def write_container(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as stream:
        stream.write(DATASET_MAGIC)
        stream.write(encode_arrays(arrays))


def read_container(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as stream:
        magic = stream.read(4)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"{path} is not a dataset container")
    return read_array_section(path, len(DATASET_MAGIC))
