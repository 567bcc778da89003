"""Graph-based over-segmentation of an image into superpixels.

Pixels become vertices of an 8-connected graph weighted by absolute
intensity difference after Gaussian pre-filtering. Components are grown
greedily over the ascending edge list: an edge of weight w merges two
components when w <= min over both sides of (largest weight already
absorbed + k / component size). A post pass absorbs components below the
minimum size across their cheapest boundary edge.

All ties are broken by the stable edge key (weight, u, v), so the output
is a pure function of the input, independent of platform or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imgio import FloatImage, GrayImage, gaussian_blur, read_pgm, write_pgm


@dataclass(frozen=True)
class SegParams:
    """Over-segmentation knobs: scale k, minimum segment size, blur sigma."""

    k: float = 2.0
    min_size: int = 9
    sigma: float = 0.5

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if self.min_size < 1:
            raise ValueError(f"min_size must be >= 1, got {self.min_size}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class PixelGraph:
    """Edge list over the 8-neighborhood, canonically oriented u < v."""

    vertex_count: int
    u: np.ndarray  # int64 vertex indices
    v: np.ndarray
    w: np.ndarray  # float64 weights >= 0

    @property
    def edge_count(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel segment ids, contiguous 0..S-1."""

    labels: np.ndarray  # (height, width) int32

    def __post_init__(self):
        if self.labels.ndim != 2 or self.labels.size == 0:
            raise ValueError(f"expected non-empty 2-d label array, got {self.labels.shape}")
        if self.labels.dtype != np.int32:
            raise ValueError(f"expected int32 labels, got {self.labels.dtype}")

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def segment_count(self) -> int:
        return int(self.labels.max()) + 1


class UnionFind:
    """Disjoint sets over 0..n-1 with size tracking and path halving."""

    __slots__ = ("parent", "size", "count")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        """Merge the sets rooted at a and b; returns the surviving root."""
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.count -= 1
        return a


def build_graph(img: FloatImage) -> PixelGraph:
    """One edge per unordered 8-neighbor pair, weight = |intensity difference|."""
    pix = img.pixels
    h, w = pix.shape
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    us, vs = [], []
    if w > 1:  # east
        us.append(idx[:, :-1].ravel())
        vs.append(idx[:, 1:].ravel())
    if h > 1:  # south
        us.append(idx[:-1, :].ravel())
        vs.append(idx[1:, :].ravel())
    if w > 1 and h > 1:  # southeast / southwest
        us.append(idx[:-1, :-1].ravel())
        vs.append(idx[1:, 1:].ravel())
        us.append(idx[:-1, 1:].ravel())
        vs.append(idx[1:, :-1].ravel())
    if not us:
        empty = np.empty(0, dtype=np.int64)
        return PixelGraph(h * w, empty, empty, np.empty(0, dtype=np.float64))
    u = np.concatenate(us)
    v = np.concatenate(vs)
    flat = pix.ravel()
    weights = np.abs(flat[u] - flat[v])
    return PixelGraph(h * w, u, v, weights)


def segment(img: GrayImage, params: SegParams = SegParams()) -> LabelMap:
    """Over-segment an image into superpixels.

    Blurs with params.sigma, grows components over the ascending edge list,
    then absorbs any component smaller than params.min_size into its
    cheapest neighbor. Labels are contiguous in first-pixel scan order.
    """
    graph = build_graph(gaussian_blur(img, params.sigma))
    order = np.lexsort((graph.v, graph.u, graph.w))
    us = graph.u[order].tolist()
    vs = graph.v[order].tolist()
    ws = graph.w[order].tolist()

    uf = UnionFind(graph.vertex_count)
    # threshold[root] = largest absorbed weight + k / component size
    threshold = [params.k] * graph.vertex_count
    k = params.k
    for u, v, w in zip(us, vs, ws):
        ru, rv = uf.find(u), uf.find(v)
        if ru == rv:
            continue
        if w <= threshold[ru] and w <= threshold[rv]:
            root = uf.union(ru, rv)
            threshold[root] = w + k / uf.size[root]

    if params.min_size > 1:
        for u, v in zip(us, vs):
            ru, rv = uf.find(u), uf.find(v)
            if ru != rv and (uf.size[ru] < params.min_size or uf.size[rv] < params.min_size):
                uf.union(ru, rv)

    return _relabel(uf, img.height, img.width)


def _relabel(uf: UnionFind, height: int, width: int) -> LabelMap:
    labels = np.empty(height * width, dtype=np.int32)
    next_id = 0
    seen: dict[int, int] = {}
    for p in range(height * width):
        root = uf.find(p)
        label = seen.get(root)
        if label is None:
            label = seen[root] = next_id
            next_id += 1
        labels[p] = label
    return LabelMap(labels.reshape(height, width))


# ---------------------------------------------------------------------------
# Serialization: 16-bit PGM plus a sidecar text file with per-label counts
# ---------------------------------------------------------------------------

def counts_path(path) -> str:
    return str(path) + ".counts"


def save_labelmap(labels: LabelMap, path) -> None:
    if labels.segment_count > 65536:
        raise ValueError(f"{labels.segment_count} segments exceed 16-bit label range")
    write_pgm(path, labels.labels.astype(np.uint16), 65535)
    counts = np.bincount(labels.labels.ravel(), minlength=labels.segment_count)
    with open(counts_path(path), "w") as fh:
        for label, count in enumerate(counts):
            fh.write(f"{label} {count}\n")


def load_labelmap(path) -> LabelMap:
    data, maxval = read_pgm(path)
    if maxval != 65535:
        raise ValueError(f"label map must be 16-bit PGM (maxval 65535), got {maxval}")
    labels = data.astype(np.int32)
    present = np.unique(labels)
    if not np.array_equal(present, np.arange(len(present))):
        raise ValueError("label ids are not contiguous from 0")
    return LabelMap(labels)
