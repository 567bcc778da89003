"""Merge superpixels into pseudo-segments and derive their sampling weights.

Adjacent segments (8-connectivity) are merged greedily, smallest
mean-intensity difference first, while that difference stays within the
threshold tau. Each pseudo-segment then receives a sampling weight equal
to the inverse of its pixel count, so small segments are drawn more often.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass

import numpy as np

from .felz import LabelMap
from .imgio import GrayImage


@dataclass(frozen=True)
class PseudoSegment:
    """A merged segment with the statistics the mask generator consumes.

    bbox is inclusive (min_x, min_y, max_x, max_y); pixels holds the sorted
    row-major flat indices of the member pixels.
    """

    id: int
    pixel_count: int
    bbox: tuple[int, int, int, int]
    centroid: tuple[float, float]
    mean_intensity: float
    pixels: np.ndarray

    @property
    def bbox_center(self) -> tuple[float, float]:
        min_x, min_y, max_x, max_y = self.bbox
        return (min_x + max_x) / 2.0, (min_y + max_y) / 2.0


@dataclass(frozen=True)
class PseudoSegmentSet:
    width: int
    height: int
    segments: list[PseudoSegment]

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i: int) -> PseudoSegment:
        return self.segments[i]


@dataclass(frozen=True)
class WeightBias:
    """Per-segment inverse-pixel-count weights and their normalization."""

    segment_ids: np.ndarray
    weights: np.ndarray
    probabilities: np.ndarray


def compute_stats(labels: LabelMap, img: GrayImage) -> PseudoSegmentSet:
    """One PseudoSegment per label: exact count, tight bbox, mean centroid/intensity."""
    if (labels.height, labels.width) != (img.height, img.width):
        raise ValueError(
            f"label map {labels.width}x{labels.height} does not match "
            f"image {img.width}x{img.height}"
        )
    flat_labels = labels.labels.ravel()
    n_segments = labels.segment_count
    order = np.argsort(flat_labels, kind="stable")
    counts = np.bincount(flat_labels, minlength=n_segments)
    bounds = np.cumsum(counts)

    width = labels.width
    flat_img = img.pixels.ravel()
    segments = []
    start = 0
    for seg_id in range(n_segments):
        idx = np.sort(order[start : bounds[seg_id]])
        start = bounds[seg_id]
        xs = idx % width
        ys = idx // width
        segments.append(
            PseudoSegment(
                id=seg_id,
                pixel_count=len(idx),
                bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                centroid=(float(xs.mean()), float(ys.mean())),
                mean_intensity=float(flat_img[idx].mean()),
                pixels=idx,
            )
        )
    return PseudoSegmentSet(width=labels.width, height=labels.height, segments=segments)


def _adjacent_pairs(labels: LabelMap) -> set[tuple[int, int]]:
    """Unordered pairs of distinct labels touching under 8-connectivity."""
    grid = labels.labels
    pairs: set[tuple[int, int]] = set()
    shifts = [grid[:, :-1].ravel(), grid[:-1, :].ravel(), grid[:-1, :-1].ravel(), grid[:-1, 1:].ravel()]
    others = [grid[:, 1:].ravel(), grid[1:, :].ravel(), grid[1:, 1:].ravel(), grid[1:, :-1].ravel()]
    for a, b in zip(shifts, others):
        if a.size == 0:
            continue
        diff = a != b
        lo = np.minimum(a[diff], b[diff])
        hi = np.maximum(a[diff], b[diff])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


def merge_pseudosegments(
    pset: PseudoSegmentSet, labels: LabelMap, tau: float
) -> tuple[PseudoSegmentSet, LabelMap]:
    """Greedily merge adjacent segments whose mean intensities differ by <= tau.

    Always merges the currently closest adjacent pair and recomputes the
    merged mean before continuing; equal differences are resolved by the
    smaller (min id, max id) pair. Returns the refined set and a label map
    relabeled contiguously in first-pixel scan order.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    n = len(pset)
    counts = [seg.pixel_count for seg in pset]
    # mean * count recovers the integral intensity sum exactly at these magnitudes
    sums = [round(seg.mean_intensity * seg.pixel_count) for seg in pset]
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a, b in _adjacent_pairs(labels):
        neighbors[a].add(b)
        neighbors[b].add(a)

    generation = [0] * n
    alive = [True] * n
    group = {i: [i] for i in range(n)}

    def mean(i: int) -> float:
        return sums[i] / counts[i]

    heap: list[tuple[float, int, int, int, int]] = []
    for a in range(n):
        for b in neighbors[a]:
            if a < b:
                heap.append((abs(mean(a) - mean(b)), a, b, 0, 0))
    heapq.heapify(heap)

    while heap:
        diff, a, b, gen_a, gen_b = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        if generation[a] != gen_a or generation[b] != gen_b:
            continue
        if diff > tau:
            break
        # merge b into a (a < b by construction)
        counts[a] += counts[b]
        sums[a] += sums[b]
        group[a].extend(group.pop(b))
        alive[b] = False
        generation[a] += 1
        neighbors[a].update(neighbors[b])
        neighbors[a].discard(a)
        neighbors[a].discard(b)
        for c in neighbors[b]:
            if c != a:
                neighbors[c].discard(b)
                neighbors[c].add(a)
        for c in neighbors[a]:
            lo, hi = (a, c) if a < c else (c, a)
            heapq.heappush(
                heap, (abs(mean(lo) - mean(hi)), lo, hi, generation[lo], generation[hi])
            )

    return _rebuild(pset, group)


def _rebuild(
    pset: PseudoSegmentSet, group: dict[int, list[int]]
) -> tuple[PseudoSegmentSet, LabelMap]:
    members = []
    for rep, ids in group.items():
        pixels = np.sort(np.concatenate([pset[i].pixels for i in ids]))
        sums = sum(round(pset[i].mean_intensity * pset[i].pixel_count) for i in ids)
        members.append((int(pixels[0]), pixels, sums))
    members.sort(key=lambda m: m[0])  # contiguous ids in first-pixel scan order

    width, height = pset.width, pset.height
    new_labels = np.empty(height * width, dtype=np.int32)
    segments = []
    for new_id, (_, pixels, intensity_sum) in enumerate(members):
        new_labels[pixels] = new_id
        xs = pixels % width
        ys = pixels // width
        segments.append(
            PseudoSegment(
                id=new_id,
                pixel_count=len(pixels),
                bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
                centroid=(float(xs.mean()), float(ys.mean())),
                mean_intensity=intensity_sum / len(pixels),
                pixels=pixels,
            )
        )
    return (
        PseudoSegmentSet(width=width, height=height, segments=segments),
        LabelMap(new_labels.reshape(height, width)),
    )


def weight_biases(pset: PseudoSegmentSet) -> WeightBias:
    """Inverse-pixel-count weights, normalized so small segments sample often."""
    if len(pset) == 0:
        raise ValueError("cannot build weight biases for an empty segment set")
    ids = np.array([seg.id for seg in pset], dtype=np.int64)
    weights = np.array([1.0 / seg.pixel_count for seg in pset], dtype=np.float64)
    return WeightBias(segment_ids=ids, weights=weights, probabilities=weights / weights.sum())


def save_manifest(pset: PseudoSegmentSet, wb: WeightBias, path) -> None:
    """Per-segment id, count, bbox, centroid, mean and sampling probability as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "pixel_count", "min_x", "min_y", "max_x", "max_y",
             "centroid_x", "centroid_y", "mean_intensity", "probability"]
        )
        for seg, prob in zip(pset, wb.probabilities):
            writer.writerow(
                [seg.id, seg.pixel_count, *seg.bbox,
                 f"{seg.centroid[0]:.6f}", f"{seg.centroid[1]:.6f}",
                 f"{seg.mean_intensity:.6f}", f"{prob:.9f}"]
            )
