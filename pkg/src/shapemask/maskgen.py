"""Sampling, positioning, shaping and perturbation of inpainting masks.

Training masks are built from weighted draws of pseudo-segments: each draw
is positioned (uniformly at random, inside the organ region, or on its own
bounding-box center) and rendered as a square, an irregular dataset mask,
or the segment's own pixel shape. Evaluation masks follow three fixed
protocols: segment shapes at their own centers, scattered small squares of
matching total area, and one large random square covering 20 to 60 percent
of the image.

Every operation draws from an explicit numpy Generator, so (image, policy,
seed) determines the output bits exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .imgio import GrayImage, load_image, write_png
from .pseg import PseudoSegment, PseudoSegmentSet, WeightBias
from .region import BinaryImage, Region, dilation, erosion, sample_point_inside

POSITIONS = ("random", "ibr", "ops")
SHAPES = ("square", "irregular", "ps")


class MaskGenerationError(RuntimeError):
    """No non-empty mask could be produced (all components clipped away)."""


@dataclass(frozen=True)
class Mask:
    """Binary raster of pixels to hide; true = masked."""

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

    @property
    def masked_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class MaskPolicy:
    position: str = "ops"
    shape: str = "ps"
    m_max: int = 8
    perturb_radius_max: int = 2

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ValueError(f"position must be one of {POSITIONS}, got {self.position!r}")
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.m_max < 1:
            raise ValueError(f"m_max must be >= 1, got {self.m_max}")
        if self.perturb_radius_max < 0:
            raise ValueError(f"perturb_radius_max must be >= 0, got {self.perturb_radius_max}")


class EvalMaskKind(Enum):
    SEGMENTS_OPS = "segments_ops"
    SMALL_SQUARES = "small_squares"
    LARGE_SQUARE = "large_square"


@dataclass(frozen=True)
class Placement:
    """Audit record for one rendered component.

    center is the bounding-box center of the component before clipping to
    the image frame; under OPS positioning it equals the source segment's
    bounding-box center exactly.
    """

    segment_id: int
    target: tuple[int, int]
    center: tuple[float, float]


def choose_m(rng: np.random.Generator, m_max: int) -> int:
    """Number of components for one mask, uniform on {1..m_max}."""
    if m_max < 1:
        raise ValueError(f"m_max must be >= 1, got {m_max}")
    return int(rng.integers(1, m_max + 1))


def sample_segments(
    pset: PseudoSegmentSet, wb: WeightBias, m: int, rng: np.random.Generator
) -> list[PseudoSegment]:
    """m distinct segments by sequential draws proportional to remaining weights."""
    n = len(pset)
    if m > n:
        raise ValueError(f"cannot sample {m} distinct segments from {n}")
    weights = [float(w) for w in wb.weights]
    chosen: list[int] = []
    for _ in range(m):
        total = 0.0
        cumulative = []
        for w in weights:
            total += w
            cumulative.append(total)
        r = rng.random() * total
        pick = 0
        while pick < n - 1 and cumulative[pick] <= r:
            pick += 1
        while weights[pick] == 0.0:  # float-edge clamp may land on a spent tail entry
            pick -= 1
        chosen.append(pick)
        weights[pick] = 0.0
    return [pset[i] for i in chosen]


def position_for(
    seg: PseudoSegment,
    policy: MaskPolicy,
    region: Region | None,
    dims: tuple[int, int],
    rng: np.random.Generator,
) -> tuple[int, int]:
    """Target pixel for one component under the policy's positioning mode.

    random: uniform over the image; ibr: uniform inside the organ region;
    ops: the segment's bounding-box center, halves rounded down.
    """
    width, height = dims
    if policy.position == "random":
        return int(rng.integers(width)), int(rng.integers(height))
    if policy.position == "ibr":
        if region is None:
            raise ValueError("ibr positioning requires a Region")
        return sample_point_inside(region, rng)
    min_x, min_y, max_x, max_y = seg.bbox
    return (min_x + max_x) // 2, (min_y + max_y) // 2


def render_square(center: tuple[int, int], area: int, dims: tuple[int, int]) -> Mask:
    """Axis-aligned square of side round(sqrt(area)) centered at center, clipped."""
    if area < 1:
        raise ValueError(f"area must be >= 1, got {area}")
    width, height = dims
    side = max(1, round(math.sqrt(area)))
    x0 = center[0] - side // 2
    y0 = center[1] - side // 2
    bits = np.zeros((height, width), dtype=bool)
    bits[max(0, y0) : max(0, y0 + side), max(0, x0) : max(0, x0 + side)] = True
    return Mask(bits)


def _ps_translation(seg: PseudoSegment, target: tuple[int, int]) -> tuple[int, int]:
    cx, cy = seg.bbox_center
    return math.floor(target[0] - cx + 0.5), math.floor(target[1] - cy + 0.5)


def _translate_bits(bits: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = bits.shape
    out = np.zeros_like(bits)
    ys, xs = np.nonzero(bits)
    ys = ys + dy
    xs = xs + dx
    keep = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    out[ys[keep], xs[keep]] = True
    return out


def render_ps(seg: PseudoSegment, target_center: tuple[int, int], dims: tuple[int, int]) -> Mask:
    """The segment's own pixels translated so its bbox center lands on the target.

    At the segment's own (OPS) center the translation is zero and the mask
    equals the segment exactly.
    """
    width, height = dims
    dx, dy = _ps_translation(seg, target_center)
    xs = seg.pixels % width + dx
    ys = seg.pixels // width + dy
    keep = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    bits = np.zeros((height, width), dtype=bool)
    bits[ys[keep], xs[keep]] = True
    return Mask(bits)


def _bbox_center(bits: np.ndarray) -> tuple[float, float]:
    ys, xs = np.nonzero(bits)
    return (int(xs.min()) + int(xs.max())) / 2.0, (int(ys.min()) + int(ys.max())) / 2.0


def perturb(mask: Mask, rng: np.random.Generator, radius_max: int) -> Mask:
    """Dilate, erode, or keep the mask (uniformly chosen), re-centered afterwards.

    The structuring element is a disk of radius uniform in {1..radius_max}.
    Erosion that would empty the mask falls back to identity; after the
    operation the mask is translated so its bounding-box center returns to
    where it started (within a pixel of integer rounding).
    """
    if radius_max < 0:
        raise ValueError(f"radius_max must be >= 0, got {radius_max}")
    if not mask.bits.any():
        raise ValueError("cannot perturb an empty mask")
    if radius_max == 0:
        return Mask(mask.bits.copy())
    op = int(rng.integers(3))
    radius = int(rng.integers(1, radius_max + 1))
    if op == 0:
        return Mask(mask.bits.copy())
    target = _bbox_center(mask.bits)
    if op == 1:
        bits = dilation(BinaryImage(mask.bits), radius).bits
    else:
        bits = erosion(BinaryImage(mask.bits), radius).bits
        if not bits.any():
            return Mask(mask.bits.copy())
    for _ in range(3):  # clipping at the frame can call for a second correction
        cx, cy = _bbox_center(bits)
        dx = math.floor(target[0] - cx + 0.5)
        dy = math.floor(target[1] - cy + 0.5)
        if dx == 0 and dy == 0:
            break
        moved = _translate_bits(bits, dx, dy)
        if not moved.any():
            break
        bits = moved
    return Mask(bits)


def load_irregular_mask(store, dims: tuple[int, int], rng: np.random.Generator) -> Mask:
    """Uniform draw from a directory of mask images, resized to the target dims.

    Nearest-neighbor resize, then threshold at 128.
    """
    store = Path(store)
    paths = sorted(p for p in store.iterdir() if p.suffix.lower() in (".png", ".pgm"))
    if not paths:
        raise ValueError(f"no mask images (*.png, *.pgm) in {store}")
    img = load_image(paths[int(rng.integers(len(paths)))])
    width, height = dims
    src_y = (np.arange(height) * img.height) // height
    src_x = (np.arange(width) * img.width) // width
    resized = img.pixels[np.ix_(src_y, src_x)]
    return Mask(resized >= 128)


def training_mask_components(
    img: GrayImage,
    pset: PseudoSegmentSet,
    wb: WeightBias,
    policy: MaskPolicy,
    rng: np.random.Generator,
    *,
    region: Region | None = None,
    store=None,
) -> tuple[Mask, list[Placement]]:
    """Build one training mask and the audit records of its components.

    Retries (bounded) when clipping leaves the union empty, which can only
    happen under random/ibr positioning of shapes near the frame.
    """
    if policy.position == "ibr" and region is None:
        raise ValueError("ibr positioning requires a Region")
    if policy.shape == "irregular" and store is None:
        raise ValueError("irregular shape requires a mask store directory")
    dims = (img.width, img.height)
    if policy.shape == "irregular":
        # dataset masks are full-frame: segment sampling and positioning do not apply
        mask = load_irregular_mask(store, dims, rng)
        if not mask.bits.any():
            raise MaskGenerationError(f"irregular mask drawn from {store} is empty")
        return mask, []
    for _ in range(16):
        mask, placements = _place_segments(img, pset, wb, policy, rng, region)
        if mask.bits.any():
            return mask, placements
    raise MaskGenerationError("all sampled components were clipped away (16 attempts)")


def _place_segments(img, pset, wb, policy, rng, region):
    dims = (img.width, img.height)
    m = choose_m(rng, policy.m_max)
    segments = sample_segments(pset, wb, m, rng)
    bits = np.zeros((img.height, img.width), dtype=bool)
    placements = []
    for seg in segments:
        target = position_for(seg, policy, region, dims, rng)
        if policy.shape == "square":
            component = render_square(target, seg.pixel_count, dims)
            side = max(1, round(math.sqrt(seg.pixel_count)))
            center = (target[0] - side // 2 + (side - 1) / 2.0,
                      target[1] - side // 2 + (side - 1) / 2.0)
        else:
            component = render_ps(seg, target, dims)
            dx, dy = _ps_translation(seg, target)
            center = (seg.bbox_center[0] + dx, seg.bbox_center[1] + dy)
            if policy.perturb_radius_max > 0 and component.bits.any():
                component = perturb(component, rng, policy.perturb_radius_max)
        bits |= component.bits
        placements.append(Placement(segment_id=seg.id, target=target, center=center))
    return Mask(bits), placements


def generate_training_mask(
    img: GrayImage,
    pset: PseudoSegmentSet,
    wb: WeightBias,
    policy: MaskPolicy,
    rng: np.random.Generator,
    *,
    region: Region | None = None,
    store=None,
) -> Mask:
    mask, _ = training_mask_components(img, pset, wb, policy, rng, region=region, store=store)
    return mask


def _small_square_side(total_area: int, rng: np.random.Generator) -> int:
    """Side in [3, 12] whose square count lands within 10% of the total area.

    Uniform over the feasible sides; when no side can meet the tolerance
    (tiny areas), the side with the smallest error is used.
    """
    def err(side):
        return abs(max(1, round(total_area / side**2)) * side**2 - total_area)

    feasible = [s for s in range(3, 13) if err(s) <= 0.1 * total_area]
    if feasible:
        return feasible[int(rng.integers(len(feasible)))]
    return min(range(3, 13), key=lambda s: (err(s), s))


def eval_mask(
    kind: EvalMaskKind,
    img: GrayImage,
    pset: PseudoSegmentSet | None,
    wb: WeightBias | None,
    rng: np.random.Generator,
    *,
    region: Region | None = None,
    m_max: int = 8,
) -> Mask:
    """One evaluation mask following the given protocol.

    segments_ops: segment shapes at their own centers, no perturbation.
    small_squares: squares scattered uniformly, total area matching the
    sampled segments. large_square: one square sized to mask a uniform
    20 to 60 percent of the image, placed fully inside it.
    """
    kind = EvalMaskKind(kind)
    width, height = img.width, img.height
    if kind is EvalMaskKind.SEGMENTS_OPS:
        policy = MaskPolicy(position="ops", shape="ps", m_max=m_max, perturb_radius_max=0)
        mask, _ = training_mask_components(img, pset, wb, policy, rng, region=region)
        return mask
    if kind is EvalMaskKind.SMALL_SQUARES:
        m = choose_m(rng, m_max)
        segments = sample_segments(pset, wb, m, rng)
        total_area = sum(seg.pixel_count for seg in segments)
        side = _small_square_side(total_area, rng)
        count = max(1, round(total_area / side**2))
        bits = np.zeros((height, width), dtype=bool)
        for _ in range(count):
            x = int(rng.integers(width))
            y = int(rng.integers(height))
            bits |= render_square((x, y), side * side, (width, height)).bits
        return Mask(bits)
    fraction = 0.20 + 0.40 * rng.random()
    side = max(1, min(round(math.sqrt(fraction * width * height)), width, height))
    x0 = int(rng.integers(width - side + 1))
    y0 = int(rng.integers(height - side + 1))
    bits = np.zeros((height, width), dtype=bool)
    bits[y0 : y0 + side, x0 : x0 + side] = True
    return Mask(bits)


# ---------------------------------------------------------------------------
# Mask file interchange: 8-bit PNG, 255 = masked, 0 = keep
# ---------------------------------------------------------------------------

def save_mask(mask: Mask, path) -> None:
    write_png(path, np.where(mask.bits, 255, 0).astype(np.uint8))


def load_mask(path) -> Mask:
    return Mask(load_image(path).pixels >= 128)
