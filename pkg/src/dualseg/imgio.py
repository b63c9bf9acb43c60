"""Binary PGM (P5) and PPM (P6) read/write, 8-bit, maxval 255.

Label maps travel as PGM with one category id per pixel; masks as PGM with
0/255 encoding; color images as PPM for quick inspection.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation


def _write_netpbm(path, magic: bytes, payload: np.ndarray, w: int, h: int) -> None:
    with open(path, "wb") as fh:
        fh.write(magic + b"\n" + f"{w} {h}\n255\n".encode())
        fh.write(payload.astype(np.uint8).tobytes(order="C"))


def write_pgm(path, array: np.ndarray) -> None:
    if array.ndim != 2:
        raise ContractViolation(f"PGM needs a 2-D array, got shape {array.shape}")
    if array.min() < 0 or array.max() > 255:
        raise ContractViolation("PGM values must lie in [0, 255]")
    h, w = array.shape
    _write_netpbm(path, b"P5", array, w, h)


def write_ppm(path, image: np.ndarray) -> None:
    """(3,H,W) floats in [0,1] -> 8-bit P6."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractViolation(f"PPM needs a (3,H,W) array, got shape {image.shape}")
    scaled = np.clip(np.round(image * 255.0), 0, 255).transpose(1, 2, 0)
    _, h, w = image.shape
    _write_netpbm(path, b"P6", scaled, w, h)


def write_mask_pgm(path, mask: np.ndarray) -> None:
    """Binary mask -> 0/255 PGM."""
    write_pgm(path, np.where(np.asarray(mask) > 0.5, 255, 0))


def _read_tokens(data: bytes, count: int):
    """First `count` whitespace-separated header tokens, skipping # comments.

    Returns (tokens, offset of the byte right after the final token's
    single whitespace terminator)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ContractViolation("truncated netpbm header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
            if len(tokens) == count:
                i += 1  # exactly one whitespace byte separates header and raster
    return tokens, i


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ContractViolation(f"not a binary PGM: magic {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ContractViolation(f"only maxval 255 supported, got {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=offset)
    return raster.reshape(h, w).copy()


def read_ppm(path) -> np.ndarray:
    """P6 -> (3,H,W) floats in [0,1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P6":
        raise ContractViolation(f"not a binary PPM: magic {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ContractViolation(f"only maxval 255 supported, got {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=h * w * 3, offset=offset)
    return raster.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / 255.0
