"""Foreground region extraction for bounded-region mask positioning.

The organ region is the largest 8-connected component of the binarized
image after morphological opening with a disk structuring element. Points
are sampled uniformly from inside the region by an explicit random stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .felz import UnionFind
from .imgio import GrayImage, write_png


class EmptyRegionError(ValueError):
    """The opened foreground has no pixels (no detectable organ)."""


@dataclass(frozen=True)
class BinaryImage:
    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.size == 0:
            raise ValueError(f"expected non-empty 2-d bit array, got {self.bits.shape}")
        if self.bits.dtype != np.bool_:
            raise ValueError(f"expected bool bits, got {self.bits.dtype}")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class Region:
    """One 8-connected foreground component with its area and inclusive bbox."""

    mask: BinaryImage
    area: int
    bbox: tuple[int, int, int, int]


def otsu_threshold(img: GrayImage) -> int:
    """Threshold maximizing between-class variance over the 256-bin histogram.

    Ties resolve to the smallest threshold; a constant image therefore
    binarizes to all-or-nothing.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    cum_count = np.cumsum(hist)
    cum_sum = np.cumsum(hist * np.arange(256))
    best_t, best_var = 0, -1.0
    for t in range(256):
        w0 = cum_count[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            var = 0.0
        else:
            mu0 = cum_sum[t] / w0
            mu1 = (cum_sum[255] - cum_sum[t]) / w1
            var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_t, best_var = t, var
    return best_t


def binarize(img: GrayImage, method="otsu") -> BinaryImage:
    """Set a pixel iff its intensity exceeds the threshold.

    method is either the string "otsu" or a fixed integer threshold.
    """
    if method == "otsu":
        threshold = otsu_threshold(img)
    elif isinstance(method, (int, np.integer)) and not isinstance(method, bool):
        threshold = int(method)
    else:
        raise ValueError(f"binarize method must be 'otsu' or an integer, got {method!r}")
    return BinaryImage(img.pixels > threshold)


def disk_offsets(radius: int) -> list[tuple[int, int]]:
    """(dy, dx) offsets of the disk structuring element: Euclidean distance <= radius."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    r2 = radius * radius
    return [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= r2
    ]


def _shift_into(out: np.ndarray, bits: np.ndarray, dy: int, dx: int, combine) -> None:
    h, w = bits.shape
    ys = slice(max(0, -dy), min(h, h - dy))
    xs = slice(max(0, -dx), min(w, w - dx))
    ys_src = slice(max(0, dy), min(h, h + dy))
    xs_src = slice(max(0, dx), min(w, w + dx))
    combine(out[ys, xs], bits[ys_src, xs_src], out=out[ys, xs])


def erosion(bin_img: BinaryImage, radius: int) -> BinaryImage:
    """Disk erosion; pixels outside the frame count as background."""
    if radius == 0:
        return BinaryImage(bin_img.bits.copy())
    out = np.ones_like(bin_img.bits)
    for dy, dx in disk_offsets(radius):
        shifted = np.zeros_like(bin_img.bits)
        _shift_into(shifted, bin_img.bits, dy, dx, np.logical_or)
        np.logical_and(out, shifted, out=out)
    return BinaryImage(out)


def dilation(bin_img: BinaryImage, radius: int) -> BinaryImage:
    """Disk dilation clipped to the frame."""
    if radius == 0:
        return BinaryImage(bin_img.bits.copy())
    out = np.zeros_like(bin_img.bits)
    for dy, dx in disk_offsets(radius):
        _shift_into(out, bin_img.bits, dy, dx, np.logical_or)
    return BinaryImage(out)


def opening(bin_img: BinaryImage, radius: int) -> BinaryImage:
    """Erosion followed by dilation with the same disk; radius 0 is identity."""
    return dilation(erosion(bin_img, radius), radius)


def label_components(bits: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected components of set bits: (label array with -1 background, count)."""
    h, w = bits.shape
    uf = UnionFind(h * w)
    idx = np.arange(h * w).reshape(h, w)
    pairs = []
    if w > 1:
        pairs.append((idx[:, :-1], idx[:, 1:], bits[:, :-1] & bits[:, 1:]))
    if h > 1:
        pairs.append((idx[:-1, :], idx[1:, :], bits[:-1, :] & bits[1:, :]))
    if h > 1 and w > 1:
        pairs.append((idx[:-1, :-1], idx[1:, 1:], bits[:-1, :-1] & bits[1:, 1:]))
        pairs.append((idx[:-1, 1:], idx[1:, :-1], bits[:-1, 1:] & bits[1:, :-1]))
    for a, b, both in pairs:
        for u, v in zip(a[both].tolist(), b[both].tolist()):
            ru, rv = uf.find(u), uf.find(v)
            if ru != rv:
                uf.union(ru, rv)
    labels = np.full(h * w, -1, dtype=np.int32)
    seen: dict[int, int] = {}
    flat = bits.ravel()
    for p in range(h * w):
        if flat[p]:
            root = uf.find(p)
            if root not in seen:
                seen[root] = len(seen)
            labels[p] = seen[root]
    return labels.reshape(h, w), len(seen)


def bounded_region(img: GrayImage, method="otsu", radius: int = 5) -> Region:
    """Largest 8-connected component of the opened binarization.

    Raises EmptyRegionError when opening leaves no foreground. Equal-area
    components resolve to the one seen first in scan order.
    """
    opened = opening(binarize(img, method), radius)
    labels, count = label_components(opened.bits)
    if count == 0:
        raise EmptyRegionError("no foreground pixels survive binarization and opening")
    areas = np.bincount(labels[labels >= 0].ravel(), minlength=count)
    winner = int(np.argmax(areas))
    mask = labels == winner
    ys, xs = np.nonzero(mask)
    return Region(
        mask=BinaryImage(mask),
        area=int(areas[winner]),
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
    )


def sample_point_inside(region: Region, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform draw over the region's set pixels, returned as (x, y)."""
    flat = np.flatnonzero(region.mask.bits.ravel())
    choice = int(flat[rng.integers(len(flat))])
    return choice % region.mask.width, choice // region.mask.width


def save_region(region: Region, path) -> None:
    """Export as 8-bit PNG, 255 inside the region, 0 outside."""
    write_png(path, np.where(region.mask.bits, 255, 0).astype(np.uint8))
