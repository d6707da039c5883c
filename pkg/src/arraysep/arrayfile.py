"""Binary array container: one JSON header line followed by raw row-major bytes.

Used for feature dumps, mask files, speaker embedding vectors and gate logs.
"""

from __future__ import annotations

import json

import numpy as np

_SUPPORTED_DTYPES = {"<f4", "<f8", "<c8", "<c16"}


def save_array(path, array: np.ndarray, meta: dict | None = None) -> None:
    array = np.ascontiguousarray(array)
    dtype = array.dtype.newbyteorder("<").str
    if dtype not in _SUPPORTED_DTYPES:
        raise ValueError(f"unsupported dtype for array file: {array.dtype}")
    header = {"shape": list(array.shape), "dtype": dtype}
    if meta:
        header.update(meta)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(array.astype(dtype).tobytes())


def load_array(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        shape = tuple(header.pop("shape"))
        dtype = header.pop("dtype")
        if dtype not in _SUPPORTED_DTYPES:
            raise ValueError(f"unsupported dtype in array file: {dtype}")
        data = np.frombuffer(fh.read(), dtype=np.dtype(dtype)).reshape(shape)
    return data.copy(), header
