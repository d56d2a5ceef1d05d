"""Netpbm input/output: 1-bit PBM label maps and 8-bit PGM conductance maps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["read_pbm", "write_pbm", "read_pgm", "write_pgm", "to_gray8", "disc_raster"]


def _tokens(data: bytes, start: int, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    pos = start
    while len(out) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated netpbm header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace() and data[end:end + 1] != b"#":
            end += 1
        out.append(data[pos:end])
        pos = end
    return out, pos


def read_pbm(path) -> np.ndarray:
    """Load a PBM file (P1 text or P4 binary) as a 0/1 *whiteness* raster.

    PBM stores 1 for black; the returned array holds 1 for white pixels.
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P1", b"P4"):
        raise ValueError(f"{path}: not a PBM file (magic {magic!r})")
    (w, h), pos = _tokens(data, 2, 2)
    width, height = int(w), int(h)
    if magic == b"P1":
        # comments may follow the header in text files
        lines = [ln.split(b"#")[0] for ln in data[pos:].splitlines()]
        body = b"".join(b"".join(ln.split()) for ln in lines)
        if len(body) != width * height:
            raise ValueError(f"{path}: expected {width * height} pixels, found {len(body)}")
        vals = np.frombuffer(body, dtype=np.uint8) - ord("0")
        if (vals > 1).any():
            raise ValueError(f"{path}: non-binary pixel value in P1 data")
        black = vals.reshape(height, width)
    else:
        pos += 1  # single whitespace after header
        row_bytes = (width + 7) // 8
        raw = np.frombuffer(data[pos:pos + row_bytes * height], dtype=np.uint8)
        if raw.size != row_bytes * height:
            raise ValueError(f"{path}: truncated P4 raster")
        black = np.unpackbits(raw.reshape(height, row_bytes), axis=1)[:, :width]
    return (1 - black).astype(np.uint8)


def write_pbm(path, white: np.ndarray, binary: bool = True) -> Path:
    white = np.asarray(white)
    if white.ndim != 2:
        raise ValueError("raster must be 2-D")
    if not np.isin(white, (0, 1)).all():
        raise ValueError("raster must be binary (0/1)")
    black = (1 - white.astype(np.uint8))
    h, w = black.shape
    path = Path(path)
    if binary:
        payload = np.packbits(black, axis=1).tobytes()
        path.write_bytes(f"P4\n{w} {h}\n".encode() + payload)
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in black)
        path.write_text(f"P1\n{w} {h}\n{rows}\n")
    return path


def to_gray8(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear map ``[lo, hi] -> [0, 255]`` with clipping."""
    if not hi > lo:
        raise ValueError(f"display bounds must satisfy hi > lo, got ({lo}, {hi})")
    scaled = (np.asarray(values, dtype=float) - lo) * (255.0 / (hi - lo))
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_pgm(path, values: np.ndarray, lo: float, hi: float) -> Path:
    """Binary 8-bit PGM (P5) of a 2-D array scaled between ``lo`` and ``hi``."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("PGM map needs a 2-D array")
    gray = to_gray8(values, lo, hi)
    h, w = gray.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise ValueError(f"{path}: only binary P5 PGM is supported")
    (w, h, maxval), pos = _tokens(data, 2, 3)
    if int(maxval) > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pos += 1
    width, height = int(w), int(h)
    return np.frombuffer(data[pos:pos + width * height], dtype=np.uint8).reshape(height, width)


def disc_raster(rows: int, cols: int, n_white: int) -> np.ndarray:
    """A centred blob of exactly ``n_white`` white pixels.

    Pixels are ranked by distance from the centre (ties by row-major index),
    giving a filled disc that is handy as a synthetic label image.
    """
    if not 0 <= n_white <= rows * cols:
        raise ValueError(f"n_white must be in [0, {rows * cols}]")
    r, c = np.mgrid[0:rows, 0:cols]
    d2 = (r - (rows - 1) / 2.0) ** 2 + (c - (cols - 1) / 2.0) ** 2
    order = np.argsort(d2.ravel(), kind="stable")
    out = np.zeros(rows * cols, dtype=np.uint8)
    out[order[:n_white]] = 1
    return out.reshape(rows, cols)
