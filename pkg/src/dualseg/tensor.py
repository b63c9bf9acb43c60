"""Dense float64 tensors, learnable parameters, and the MST1 file format.

Tensors are plain numpy arrays in double precision, row-major order.
`as_tensor` is the single entry point that enforces dtype and contiguity;
everything downstream assumes its output.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ContractViolation

MST1_MAGIC = b"MST1"


def as_tensor(data) -> np.ndarray:
    """Coerce to a C-contiguous float64 array (rank preserved, 0-d included)."""
    arr = np.asarray(data, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Parameter:
    """A learnable tensor with a paired gradient buffer of the same shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, value, name: str = ""):
        self.name = name
        self.value = as_tensor(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name or '<anon>'}, shape={self.value.shape})"


def tensor_to_bytes(array: np.ndarray) -> bytes:
    """Serialize: magic, u32-LE rank, rank x u32-LE dims, f64-LE row-major data."""
    array = as_tensor(array)
    header = MST1_MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + array.astype("<f8").tobytes(order="C")


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != MST1_MAGIC:
        raise ContractViolation(f"bad magic {blob[:4]!r}, expected {MST1_MAGIC!r}")
    (rank,) = struct.unpack_from("<I", blob, 4)
    dims = struct.unpack_from(f"<{rank}I", blob, 8)
    offset = 8 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 8 * count
    if len(blob) != expected:
        raise ContractViolation(
            f"MST1 payload length {len(blob)} != expected {expected} for dims {dims}"
        )
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return data.astype(np.float64).reshape(dims)


def save_tensor(path, array: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(array))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
