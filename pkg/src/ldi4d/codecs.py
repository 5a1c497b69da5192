"""Readers and writers for the on-disk sample formats used by scene bundles.

Three formats are supported: PFM for float maps (depth), the Middlebury
.flo layout for two-channel flow fields, and 8-bit PNG for color images
and binary masks. All readers return float64 arrays; writers accept any
float array and narrow to the format's native width.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

FLO_MAGIC = 202021.25


class CodecError(ValueError):
    """Raised when a file cannot be decoded as the expected format."""


# ---------------------------------------------------------------------------
# PFM


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a PFM file into an (H, W) or (H, W, 3) float64 array.

    The header is either ``Pf`` (grayscale) or ``PF`` (color), followed by a
    dimensions line and a scale line. A negative scale marks little-endian
    sample data. Scanlines are stored bottom-to-top, so the result is
    flipped vertically before returning.
    """
    path = Path(path)
    with path.open("rb") as fh:
        header = fh.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise CodecError(f"{path}: not a PFM file (header {header!r})")

        dims = fh.readline().decode("ascii", errors="replace")
        match = re.match(r"^(\d+)\s+(\d+)\s*$", dims)
        if not match:
            raise CodecError(f"{path}: malformed PFM dimensions line {dims!r}")
        width, height = int(match.group(1)), int(match.group(2))

        try:
            scale = float(fh.readline().decode("ascii"))
        except ValueError as exc:
            raise CodecError(f"{path}: malformed PFM scale line") from exc
        endian = "<" if scale < 0 else ">"

        count = width * height * channels
        data = np.fromfile(fh, endian + "f", count)
        if data.size != count:
            raise CodecError(
                f"{path}: truncated PFM payload ({data.size} of {count} samples)"
            )

    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).astype(np.float64)


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write an (H, W) or (H, W, 1|3) array as a little-endian PFM file."""
    path = Path(path)
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        header = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    else:
        raise CodecError(f"cannot encode shape {arr.shape} as PFM")

    height, width = arr.shape[:2]
    with path.open("wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        np.flipud(arr).astype("<f").tofile(fh)


# ---------------------------------------------------------------------------
# Middlebury .flo


def read_flo(path: str | Path) -> np.ndarray:
    """Read a Middlebury .flo file into an (H, W, 2) float64 array."""
    path = Path(path)
    with path.open("rb") as fh:
        raw = fh.read(12)
        if len(raw) != 12:
            raise CodecError(f"{path}: truncated .flo header")
        magic, width, height = struct.unpack("<fii", raw)
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise CodecError(f"{path}: bad .flo magic {magic!r}")
        if width <= 0 or height <= 0:
            raise CodecError(f"{path}: bad .flo dimensions {width}x{height}")
        count = width * height * 2
        data = np.fromfile(fh, "<f", count)
        if data.size != count:
            raise CodecError(
                f"{path}: truncated .flo payload ({data.size} of {count} samples)"
            )
    return data.reshape(height, width, 2).astype(np.float64)


def write_flo(path: str | Path, flow: np.ndarray) -> None:
    """Write an (H, W, 2) array as a little-endian Middlebury .flo file."""
    path = Path(path)
    arr = np.asarray(flow, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise CodecError(f"cannot encode shape {arr.shape} as .flo")
    height, width = arr.shape[:2]
    with path.open("wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, width, height))
        arr.astype("<f").tofile(fh)


# ---------------------------------------------------------------------------
# PNG


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG into an (H, W, C) float64 array scaled to [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB" if len(img.getbands()) >= 3 else "L")
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise CodecError(f"{path}: cannot decode PNG ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def write_png(path: str | Path, data: np.ndarray) -> None:
    """Write an (H, W, 1|3) float array in [0, 1] as an 8-bit PNG."""
    path = Path(path)
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise CodecError(f"cannot encode shape {arr.shape} as PNG")
    quantized = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    if quantized.shape[2] == 1:
        img = Image.fromarray(quantized[:, :, 0], mode="L")
    else:
        img = Image.fromarray(quantized, mode="RGB")
    img.save(path, format="PNG")
