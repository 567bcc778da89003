"""Grayscale image containers, bit-exact PGM/PNG file I/O, and Gaussian pre-filtering.

Only two on-disk formats are supported: binary PGM (P5) and 8-bit grayscale
PNG without alpha. Both round-trip losslessly. PGM is the canonical format
for golden files; PNG is used for interchange (masks, regions, fills).
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class UnsupportedImageError(ValueError):
    """File is structurally readable but not an 8-bit grayscale PGM/PNG."""


@dataclass(frozen=True)
class GrayImage:
    """8-bit single-channel raster; the unit of all processing."""

    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise ValueError(f"expected 2-d pixel array, got shape {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {self.pixels.dtype}")
        if self.pixels.size == 0:
            raise ValueError("image must have at least one pixel")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @staticmethod
    def from_array(values) -> "GrayImage":
        arr = np.asarray(values)
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("intensities must lie in [0, 255]")
        return GrayImage(arr.astype(np.uint8))

    def astype_float(self) -> "FloatImage":
        return FloatImage(self.pixels.astype(np.float64))


@dataclass(frozen=True)
class FloatImage:
    """Real-valued raster used between filtering, segmentation and metrics."""

    pixels: np.ndarray  # (height, width) float64

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise ValueError(f"expected 2-d pixel array, got shape {self.pixels.shape}")
        if self.pixels.dtype != np.float64:
            raise ValueError(f"expected float64 pixels, got {self.pixels.dtype}")
        if self.pixels.size == 0:
            raise ValueError("image must have at least one pixel")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("pixel values must be finite")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


# ---------------------------------------------------------------------------
# PGM (binary P5)
# ---------------------------------------------------------------------------

def _pgm_tokens(blob: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the first payload byte (one
    whitespace character after the last token).
    """
    tokens: list[bytes] = []
    i = 0
    n = len(blob)
    while len(tokens) < count:
        while i < n and blob[i : i + 1].isspace():
            i += 1
        if i < n and blob[i : i + 1] == b"#":
            while i < n and blob[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < n and not blob[i : i + 1].isspace():
            i += 1
        if start == i:
            raise UnsupportedImageError("truncated PGM header")
        tokens.append(blob[start:i])
    if i >= n or not blob[i : i + 1].isspace():
        raise UnsupportedImageError("PGM header not terminated by whitespace")
    return tokens, i + 1


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Decode a binary P5 PGM into ((height, width) array, maxval).

    maxval 255 yields uint8 data, maxval 256..65535 big-endian uint16.
    """
    blob = Path(path).read_bytes()
    if blob[:2] != b"P5":
        raise UnsupportedImageError("not a binary (P5) PGM file")
    (magic, w_tok, h_tok, max_tok), offset = _pgm_tokens(blob, 4)
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError as exc:
        raise UnsupportedImageError(f"malformed PGM header: {exc}") from exc
    if width < 1 or height < 1:
        raise UnsupportedImageError(f"bad PGM dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise UnsupportedImageError(f"bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    payload = blob[offset : offset + width * height * dtype.itemsize]
    if len(payload) != width * height * dtype.itemsize:
        raise UnsupportedImageError("PGM payload shorter than header promises")
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return data.astype(np.uint16) if maxval > 255 else data.copy(), maxval


def write_pgm(path, data: np.ndarray, maxval: int) -> None:
    data = np.ascontiguousarray(data)
    height, width = data.shape
    payload = (
        data.astype(">u2").tobytes() if maxval > 255 else data.astype(np.uint8).tobytes()
    )
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (width, height, maxval))
        fh.write(payload)


# ---------------------------------------------------------------------------
# PNG (8-bit grayscale, color type 0, no interlace)
# ---------------------------------------------------------------------------

def _png_chunks(blob: bytes):
    i = len(PNG_SIGNATURE)
    while i + 8 <= len(blob):
        (length,) = struct.unpack(">I", blob[i : i + 4])
        ctype = blob[i + 4 : i + 8]
        data = blob[i + 8 : i + 8 + length]
        if len(data) != length:
            raise UnsupportedImageError("truncated PNG chunk")
        yield ctype, data
        i += 12 + length  # header + payload + CRC
        if ctype == b"IEND":
            return
    raise UnsupportedImageError("PNG missing IEND chunk")


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, width: int, height: int) -> np.ndarray:
    stride = width + 1
    if len(raw) != stride * height:
        raise UnsupportedImageError("PNG pixel data has wrong length")
    out = np.zeros((height, width), dtype=np.uint8)
    prev = bytearray(width)
    for y in range(height):
        row = bytearray(raw[y * stride + 1 : (y + 1) * stride])
        ftype = raw[y * stride]
        if ftype == 0:
            pass
        elif ftype == 1:  # sub
            for x in range(1, width):
                row[x] = (row[x] + row[x - 1]) & 0xFF
        elif ftype == 2:  # up
            for x in range(width):
                row[x] = (row[x] + prev[x]) & 0xFF
        elif ftype == 3:  # average
            for x in range(width):
                left = row[x - 1] if x else 0
                row[x] = (row[x] + (left + prev[x]) // 2) & 0xFF
        elif ftype == 4:  # paeth
            for x in range(width):
                left = row[x - 1] if x else 0
                upleft = prev[x - 1] if x else 0
                row[x] = (row[x] + _paeth(left, prev[x], upleft)) & 0xFF
        else:
            raise UnsupportedImageError(f"unknown PNG filter type {ftype}")
        out[y] = np.frombuffer(bytes(row), dtype=np.uint8)
        prev = row
    return out


def read_png(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[: len(PNG_SIGNATURE)] != PNG_SIGNATURE:
        raise UnsupportedImageError("not a PNG file")
    header = None
    idat = bytearray()
    for ctype, data in _png_chunks(blob):
        if ctype == b"IHDR":
            header = struct.unpack(">IIBBBBB", data)
        elif ctype == b"IDAT":
            idat.extend(data)
    if header is None:
        raise UnsupportedImageError("PNG missing IHDR chunk")
    width, height, depth, color, comp, filt, interlace = header
    if depth != 8 or color != 0:
        raise UnsupportedImageError(
            f"only 8-bit grayscale PNG supported (bit depth {depth}, color type {color})"
        )
    if comp != 0 or filt != 0 or interlace != 0:
        raise UnsupportedImageError("unsupported PNG compression/filter/interlace mode")
    if width < 1 or height < 1:
        raise UnsupportedImageError(f"bad PNG dimensions {width}x{height}")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise UnsupportedImageError(f"corrupt PNG pixel data: {exc}") from exc
    return _unfilter(raw, width, height)


def _png_chunk(ctype: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(data, zlib.crc32(ctype))
    return struct.pack(">I", len(data)) + ctype + data + struct.pack(">I", crc)


def write_png(path, data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype=np.uint8)
    height, width = data.shape
    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    scanlines = b"".join(b"\x00" + data[y].tobytes() for y in range(height))
    with open(path, "wb") as fh:
        fh.write(PNG_SIGNATURE)
        fh.write(_png_chunk(b"IHDR", header))
        fh.write(_png_chunk(b"IDAT", zlib.compress(scanlines)))
        fh.write(_png_chunk(b"IEND", b""))


# ---------------------------------------------------------------------------
# Public image I/O
# ---------------------------------------------------------------------------

def load_image(path) -> GrayImage:
    """Pixel-exact decode of an 8-bit grayscale PGM (P5) or PNG file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic[:2] == b"P5":
        data, maxval = read_pgm(path)
        if maxval != 255:
            raise UnsupportedImageError(f"PGM maxval {maxval} != 255 (8-bit only)")
        return GrayImage(data)
    if magic == PNG_SIGNATURE:
        return GrayImage(read_png(path))
    raise UnsupportedImageError(f"unrecognized image format in {path}")


def save_image(img: GrayImage, path) -> None:
    """Write img as P5 PGM or 8-bit grayscale PNG according to the extension."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        write_pgm(path, img.pixels, 255)
    elif suffix == ".png":
        write_png(path, img.pixels)
    else:
        raise ValueError(f"unsupported image extension {suffix!r} (use .pgm or .png)")


# ---------------------------------------------------------------------------
# Gaussian pre-filter
# ---------------------------------------------------------------------------

def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian taps with radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(img, sigma: float) -> FloatImage:
    """Separable Gaussian convolution with edge replication.

    sigma = 0 returns the image converted to real values unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    pixels = img.pixels.astype(np.float64)
    if sigma == 0:
        return FloatImage(pixels)
    taps = gaussian_kernel(sigma)
    radius = len(taps) // 2
    padded = np.pad(pixels, ((0, 0), (radius, radius)), mode="edge")
    horiz = np.zeros_like(pixels)
    for i, t in enumerate(taps):
        horiz += t * padded[:, i : i + pixels.shape[1]]
    padded = np.pad(horiz, ((radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(pixels)
    for i, t in enumerate(taps):
        out += t * padded[i : i + pixels.shape[0], :]
    return FloatImage(out)
