"""TNS1 binary tensor files and named-tensor directories.

Layout (all integers little-endian)::

    magic    4 bytes  b"TNS1"
    version  u8       1
    dtype    u8       0 = float32, 1 = float64
    ndim     u8       1..3
    dims     ndim x u64
    payload  row-major values, little-endian

float32 files are accepted on input and widened to float64 by ``read_tensor``;
everything written by this package is float64.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TNS1"
VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEADER = struct.Struct("<4sBBB")
MANIFEST_NAME = "manifest.json"


class TensorFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TensorFile:
    dtype_code: int
    data: np.ndarray  # stored dtype, original shape

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    def as_float64(self) -> np.ndarray:
        return self.data.astype(np.float64)


def parse(buf: bytes) -> TensorFile:
    if len(buf) < _HEADER.size:
        raise TensorFormatError("truncated header")
    magic, version, dtype_code, ndim = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if dtype_code not in DTYPES:
        raise TensorFormatError(f"unknown dtype code {dtype_code}")
    if not 1 <= ndim <= 3:
        raise TensorFormatError(f"ndim must be 1..3, got {ndim}")
    off = _HEADER.size
    if len(buf) < off + 8 * ndim:
        raise TensorFormatError("truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, off)
    off += 8 * ndim
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"zero-length dimension in {dims}")
    dt = DTYPES[dtype_code]
    expected = dt.itemsize * int(np.prod(dims, dtype=np.uint64))
    if len(buf) - off != expected:
        raise TensorFormatError(f"payload is {len(buf) - off} bytes, expected {expected} for dims {dims}")
    data = np.frombuffer(buf, dtype=dt, offset=off).reshape(dims).copy()
    return TensorFile(dtype_code, data)


def serialize(tensor: TensorFile | np.ndarray, dtype_code: int | None = None) -> bytes:
    if isinstance(tensor, TensorFile):
        code = tensor.dtype_code if dtype_code is None else dtype_code
        arr = tensor.data
    else:
        code = 1 if dtype_code is None else dtype_code
        arr = np.asarray(tensor)
    if code not in DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    if not 1 <= arr.ndim <= 3:
        raise TensorFormatError(f"ndim must be 1..3, got shape {arr.shape}")
    if any(d == 0 for d in arr.shape):
        raise TensorFormatError(f"zero-length dimension in {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=DTYPES[code])
    head = _HEADER.pack(MAGIC, VERSION, code, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes()


def read_tensor(path) -> np.ndarray:
    return parse(Path(path).read_bytes()).as_float64()


def write_tensor(path, arr) -> None:
    Path(path).write_bytes(serialize(np.asarray(arr, dtype=np.float64)))


def save_params(directory, params: dict[str, np.ndarray], extra: dict | None = None) -> None:
    """Write one ``<name>.tns`` per tensor plus a JSON manifest listing them in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in params.items():
        fname = f"{name}.tns"
        write_tensor(directory / fname, arr)
        entries.append({"name": name, "file": fname, "shape": list(np.shape(arr))})
    manifest = {"format": "TNS1", "tensors": entries}
    if extra:
        manifest.update(extra)
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_params(directory) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    params = {}
    for entry in manifest["tensors"]:
        arr = read_tensor(directory / entry["file"])
        if list(arr.shape) != entry["shape"]:
            raise TensorFormatError(f"{entry['file']}: shape {arr.shape} does not match manifest {entry['shape']}")
        params[entry["name"]] = arr
    return params, manifest
