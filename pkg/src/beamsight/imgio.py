"""Binary PPM (P6) and PGM (P5) image persistence.

Images are float arrays in [0, 1] internally; files are 8-bit with
maxval 255, except binary bitmaps which use PGM maxval 1. Writes use a
canonical header so write(read(x)) round-trips byte-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Malformed or unsupported PPM/PGM content."""


def _write_atomic(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)


def write_ppm(path: Path, img: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as binary P6, maxval 255."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError(f"PPM needs an (H, W, 3) image, got {img.shape}")
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    _write_atomic(path, f"P6\n{w} {h}\n255\n".encode() + data.tobytes())


def _parse_header(raw: bytes, magic: bytes, path: Path) -> tuple[int, int, int, int]:
    if raw[:2] != magic:
        raise ImageFormatError(f"{path}: expected {magic.decode()} magic, got {raw[:2]!r}")
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":   # comment to end of line
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated header")
        try:
            tokens.append(int(raw[start:pos]))
        except ValueError as exc:
            raise ImageFormatError(f"{path}: bad header token {raw[start:pos]!r}") from exc
    return tokens[0], tokens[1], tokens[2], pos + 1   # width, height, maxval, data offset


def read_ppm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    w, h, maxval, off = _parse_header(raw, b"P6", path)
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported P6 maxval {maxval} (only 255)")
    need = w * h * 3
    if len(raw) - off < need:
        raise ImageFormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8, count=need, offset=off)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


def write_pgm(path: Path, img: np.ndarray, maxval: int = 255) -> None:
    """Write an (H, W) array as binary P5. maxval 255 quantizes floats in
    [0, 1]; maxval 1 writes a binary bitmap as-is."""
    if img.ndim != 2:
        raise ImageFormatError(f"PGM needs an (H, W) image, got {img.shape}")
    if maxval == 255:
        data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    elif maxval == 1:
        data = (img != 0).astype(np.uint8)
    else:
        raise ImageFormatError(f"unsupported PGM maxval {maxval}")
    h, w = img.shape
    _write_atomic(path, f"P5\n{w} {h}\n{maxval}\n".encode() + data.tobytes())


def read_pgm(path: Path) -> tuple[np.ndarray, int]:
    """Returns (array, maxval): floats in [0, 1] for maxval 255, a 0/1
    uint8 grid for maxval 1."""
    raw = path.read_bytes()
    w, h, maxval, off = _parse_header(raw, b"P5", path)
    if maxval not in (1, 255):
        raise ImageFormatError(f"{path}: unsupported P5 maxval {maxval}")
    need = w * h
    if len(raw) - off < need:
        raise ImageFormatError(f"{path}: truncated pixel data")
    data = np.frombuffer(raw, dtype=np.uint8, count=need, offset=off).reshape(h, w)
    if maxval == 255:
        return data.astype(np.float64) / 255.0, maxval
    return data.copy(), maxval
