"""Axis-aligned box arithmetic, run-length mask codec, and IoU primitives.

Boxes follow the COCO ``(x, y, w, h)`` top-left + size convention; corner form
is available as a conversion helper only.  Masks are stored run-length encoded
over the column-major (Fortran) pixel scan, first run counting background
zeros, matching the uncompressed COCO layout.  All types are immutable and all
operations pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BBox",
    "RleMask",
    "box_iou",
    "box_intersection_area",
    "mask_iou",
    "mask_intersection_area",
    "rle_encode",
    "rle_decode",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned bounding box: top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"BBox.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.w < 0 or self.h < 0:
            raise ValueError(f"BBox size must be non-negative, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_xyxy(self) -> tuple[float, float, float, float]:
        """Corner form ``(x1, y1, x2, y2)``."""
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls(x1, y1, x2 - x1, y2 - y1)


def box_intersection_area(a: BBox, b: BBox) -> float:
    """Overlap area of two boxes on continuous coordinates."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    return iw * ih if iw > 0 and ih > 0 else 0.0


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes on continuous coordinates.

    Areas are derived from the same corner arithmetic as the intersection so
    identical boxes score exactly 1.0.  Degenerate cases (zero-area union)
    return 0.0 by convention.
    """
    inter = box_intersection_area(a, b)
    area_a = ((a.x + a.w) - a.x) * ((a.y + a.h) - a.y)
    area_b = ((b.x + b.w) - b.x) * ((b.y + b.h) - b.y)
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return min(inter / union, 1.0)


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask over the column-major pixel scan.

    ``counts`` alternates background/foreground run lengths; the first run
    counts background zeros and may have length zero (mask starting with a
    foreground pixel).  Run lengths must sum to ``height * width``.
    """

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"mask size must be positive, got {self.height}x{self.width}")
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise ValueError("RLE run lengths must be non-negative")
        total = sum(counts)
        if total != self.height * self.width:
            raise ValueError(
                f"RLE counts sum {total} != height*width = {self.height * self.width}"
            )
        for i in range(1, len(counts)):
            if counts[i] == 0 and counts[i - 1] == 0:
                raise ValueError("adjacent zero-length runs (only a leading zero is allowed)")

    @property
    def area(self) -> int:
        """Number of foreground pixels."""
        return sum(self.counts[1::2])


def rle_encode(mask: np.ndarray) -> RleMask:
    """Encode a dense binary grid into column-major run lengths.

    The inverse of :func:`rle_decode`; ``rle_decode(rle_encode(m)) == m``.
    """
    m = np.asarray(mask)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("mask must be a non-empty 2-D grid")
    m = m.astype(bool)
    h, w = m.shape
    flat = m.ravel(order="F")
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask(h, w, tuple(counts))


def rle_decode(rle: RleMask) -> np.ndarray:
    """Decode run lengths back to a dense boolean grid of shape (height, width)."""
    flat = np.zeros(rle.height * rle.width, dtype=bool)
    pos = 0
    value = False
    for run in rle.counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape((rle.height, rle.width), order="F")


def _foreground_runs(rle: RleMask) -> list[tuple[int, int]]:
    # half-open [start, end) foreground intervals in the flat column-major scan
    runs = []
    pos = 0
    value = False
    for run in rle.counts:
        if value and run > 0:
            runs.append((pos, pos + run))
        pos += run
        value = not value
    return runs


def mask_intersection_area(a: RleMask, b: RleMask) -> int:
    """Foreground overlap in pixels, computed directly on run intervals."""
    if (a.height, a.width) != (b.height, b.width):
        raise ValueError(
            f"mask size mismatch: {a.height}x{a.width} vs {b.height}x{b.width}"
        )
    runs_a = _foreground_runs(a)
    runs_b = _foreground_runs(b)
    inter = 0
    i = j = 0
    while i < len(runs_a) and j < len(runs_b):
        lo = max(runs_a[i][0], runs_b[j][0])
        hi = min(runs_a[i][1], runs_b[j][1])
        if hi > lo:
            inter += hi - lo
        if runs_a[i][1] <= runs_b[j][1]:
            i += 1
        else:
            j += 1
    return inter


def mask_iou(a: RleMask, b: RleMask) -> float:
    """IoU of two RLE masks computed directly on run intervals.

    Both masks empty yields 1.0 (COCO-tooling convention); empty vs non-empty
    yields 0.0.  Raises ``ValueError`` on size mismatch.
    """
    inter = mask_intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 1.0
    return inter / union
