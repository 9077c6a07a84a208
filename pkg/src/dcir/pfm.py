"""Portable float map (PFM) reader and writer.

PFM stores raw float32 scanlines bottom-to-top with a three-line ASCII
header: ``PF`` (color) or ``Pf`` (grayscale), ``width height``, and a
scale whose sign encodes endianness (negative = little-endian).  All
images in this package persist as PFM because the format round-trips
float32 bit-exactly and is trivial to parse anywhere.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next whitespace-delimited token and the position after it."""
    while pos < len(buf) and buf[pos : pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise DataError(f"PFM header truncated at byte {start}")
    return buf[start:pos], pos


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into an (H, W) or (H, W, 3) float32 array.

    Raises:
        DataError: malformed header or payload shorter than the header
            promises (the message names the offending byte offset).
    """
    with open(path, "rb") as f:
        buf = f.read()

    magic, pos = _read_token(buf, 0)
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise DataError(f"not a PFM file: bad magic {magic!r} at byte 0")

    wtok, pos = _read_token(buf, pos)
    htok, pos = _read_token(buf, pos)
    stok, pos = _read_token(buf, pos)
    try:
        width, height = int(wtok), int(htok)
        scale = float(stok)
    except ValueError as exc:
        raise DataError(f"PFM header not numeric near byte {pos}: {exc}") from exc
    if width <= 0 or height <= 0:
        raise DataError(f"PFM dimensions must be positive, got {width}x{height}")
    if scale == 0.0:
        raise DataError("PFM scale must be nonzero")

    # Exactly one whitespace byte separates header and payload.
    pos += 1
    count = width * height * channels
    payload = buf[pos : pos + count * 4]
    if len(payload) != count * 4:
        raise DataError(
            f"PFM payload truncated at byte {pos + len(payload)}: "
            f"expected {count * 4} bytes of samples, found {len(payload)}"
        )

    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    if not np.all(np.isfinite(data)):
        raise DataError(f"PFM payload contains non-finite samples: {path}")
    if channels == 3:
        img = data.reshape(height, width, 3)
    else:
        img = data.reshape(height, width)
    # Scanlines are stored bottom-up.
    return np.ascontiguousarray(img[::-1])


def write_pfm(path, image: np.ndarray, little_endian: bool = True) -> None:
    """Write an (H, W) or (H, W, 3) array to a PFM file as float32."""
    image = np.asarray(image)
    if image.ndim == 2:
        magic = b"Pf"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"PF"
    else:
        raise DataError(f"PFM supports (H, W) or (H, W, 3) images, got {image.shape}")
    if not np.all(np.isfinite(image)):
        raise DataError("refusing to write non-finite samples to PFM")

    height, width = image.shape[:2]
    scale = -1.0 if little_endian else 1.0
    dtype = "<f4" if little_endian else ">f4"
    samples = np.ascontiguousarray(image[::-1].astype(np.float32)).astype(dtype)
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(f"{scale:.1f}\n".encode("ascii"))
        f.write(samples.tobytes())
