"""Grayscale image file I/O: binary PGM (P5) and PNG.

PGM is the working format: 8-bit maps to uint8, 16-bit to uint16 with
big-endian sample order as the format requires. PNG support exists for the
review service and external images; Pillow handles the codec, we handle the
dtype normalisation. Images are 2-D numpy arrays indexed [row, col].
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoError
from .geometry import ImageShape

def _parse_pgm_header(data: bytes) -> tuple[int, int, int, int]:
    """(width, height, maxval, raster offset) of a binary PGM header.

    Comments (# to end of line) may appear wherever whitespace separates the
    header tokens; exactly one whitespace byte precedes the raster.
    """
    if data[:2] != b"P5":
        raise IoError("not a binary PGM (P5) header")
    pos, n = 2, len(data)
    values = []
    while len(values) < 3:
        while pos < n:
            ch = data[pos : pos + 1]
            if ch.isspace():
                pos += 1
            elif ch == b"#":
                nl = data.find(b"\n", pos)
                if nl < 0:
                    raise IoError("unterminated PGM header comment")
                pos = nl + 1
            else:
                break
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise IoError("malformed PGM header")
        values.append(int(data[start:pos]))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise IoError("malformed PGM header")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise IoError(f"bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise IoError(f"bad PGM maxval {maxval}")
    return width, height, maxval, pos + 1


def _parse_pgm(data: bytes) -> np.ndarray:
    width, height, maxval, offset = _parse_pgm_header(data)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise IoError(f"PGM raster truncated: need {need} bytes, have {len(raster)}")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return arr.astype(np.uint16) if dtype.itemsize == 2 else arr.copy()


def read_image(path: str | Path) -> np.ndarray:
    """Load a grayscale image as a 2-D uint8 or uint16 array.

    Dispatches on content (PGM magic vs PNG signature), not extension.
    Raises IoError for anything unreadable.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return decode_image(data)


def decode_image(data: bytes) -> np.ndarray:
    """Decode PGM or PNG bytes to a 2-D uint8/uint16 array."""
    if data[:2] == b"P5":
        return _parse_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            img = Image.open(io.BytesIO(data))
            img.load()
        except Exception as e:
            raise IoError(f"cannot decode PNG: {e}") from e
        if img.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img, dtype=np.uint16 if "16" in img.mode else np.int32)
            if arr.dtype == np.int32:
                arr = np.clip(arr, 0, 65535).astype(np.uint16)
        else:
            arr = np.asarray(img.convert("L"))
        if arr.ndim != 2:
            raise IoError(f"expected grayscale PNG, got shape {arr.shape}")
        return arr
    raise IoError("unrecognised image format (expected PGM P5 or PNG)")


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a uint8 or uint16 array as binary PGM."""
    if image.ndim != 2:
        raise IoError(f"PGM image must be 2-D, got shape {image.shape}")
    if image.dtype == np.uint8:
        maxval, body = 255, image.tobytes()
    elif image.dtype == np.uint16:
        maxval, body = 65535, image.astype(">u2").tobytes()
    else:
        raise IoError(f"PGM supports uint8/uint16, got {image.dtype}")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode()
    try:
        Path(path).write_bytes(header + body)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def encode_png(image: np.ndarray) -> bytes:
    """Encode a 2-D array as 8-bit grayscale PNG bytes (16-bit is windowed)."""
    if image.ndim != 2:
        raise IoError(f"PNG image must be 2-D, got shape {image.shape}")
    if image.dtype != np.uint8:
        peak = int(image.max()) or 1
        image = (image.astype(np.float64) * (255.0 / peak)).round().astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(image, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def read_image_shape(path: str | Path) -> ImageShape:
    """Image dimensions without decoding the full raster (header only)."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            head = f.read(512)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if head[:2] == b"P5":
        try:
            width, height, _, _ = _parse_pgm_header(head)
        except IoError as e:
            raise IoError(f"bad PGM header in {path}: {e}") from e
        return ImageShape(width=width, height=height)
    if head[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            with Image.open(path) as img:
                return ImageShape(width=img.width, height=img.height)
        except Exception as e:
            raise IoError(f"cannot read PNG header of {path}: {e}") from e
    raise IoError(f"unrecognised image format in {path}")


def shape_of(image: np.ndarray) -> ImageShape:
    """ImageShape of an in-memory array (width = columns, height = rows)."""
    return ImageShape(width=image.shape[1], height=image.shape[0])
