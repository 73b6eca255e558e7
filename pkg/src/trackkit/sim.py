"""Deterministic synthetic sequences for tracker and evaluator verification.

Objects follow constant-velocity (optionally turning) trajectories that stay
inside the image; detections derive from the ground truth by positional
jitter, score noise, random drops, and Poisson clutter, with per-object
canonical unit embeddings.  All randomness comes from a SplitMix64 stream so
identical specs produce byte-identical output on any platform; the generator
constants and test vectors are documented in ``docs/format.md``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detset import Detection, DetectionSet, GtAnnotation, GtSet, ImageInfo, VideoInfo
from .geometry import BBox, RleMask, rle_encode

__all__ = ["SplitMix64", "SequenceSpec", "simulate"]

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """64-bit SplitMix64 generator plus the derived distributions used here.

    Uniforms take the top 53 bits of each output; normals use Box-Muller on
    two uniforms; Poisson counts use Knuth's product-of-uniforms method.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # u1 in (0, 1] keeps the log finite
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = self.random()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def poisson(self, lam: float) -> int:
        if lam <= 0:
            return 0
        limit = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.random()
            if p <= limit:
                return k
            k += 1

    def unit_vector(self, dim: int) -> np.ndarray:
        v = np.array([self.normal() for _ in range(dim)])
        norm = np.linalg.norm(v)
        while norm == 0.0:
            v = np.array([self.normal() for _ in range(dim)])
            norm = np.linalg.norm(v)
        return v / norm


@dataclass(frozen=True)
class SequenceSpec:
    """Configuration of one synthetic video sequence; the seed is mandatory."""

    n_objects: int
    n_frames: int
    rng_seed: int
    image_width: int = 1000
    image_height: int = 1000
    velocity_min: float = 0.5
    velocity_max: float = 3.0
    size_min: float = 32.0
    size_max: float = 72.0
    jitter_sigma: float = 0.0
    score_noise_sigma: float = 0.0
    drop_rate: float = 0.0
    clutter_rate: float = 0.0
    embedding_noise_sigma: float = 0.0
    embedding_dim: int = 16
    min_separation: float = 0.0
    turn_rate: float = 0.0
    include_masks: bool = False
    video_id: int = 1

    def __post_init__(self):
        if self.n_objects <= 0 or self.n_frames <= 0:
            raise ValueError("n_objects and n_frames must be positive")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image size must be positive")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError(f"drop_rate must be in [0, 1], got {self.drop_rate}")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be >= 0")
        for name in ("jitter_sigma", "score_noise_sigma", "embedding_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.velocity_min <= self.velocity_max:
            raise ValueError("need 0 <= velocity_min <= velocity_max")
        if not 0.0 < self.size_min <= self.size_max:
            raise ValueError("need 0 < size_min <= size_max")
        if self.size_max >= min(self.image_width, self.image_height):
            raise ValueError("objects must fit inside the image")
        if self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")


@dataclass(frozen=True)
class _Trajectory:
    w: float
    h: float
    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def box(self, frame: int) -> BBox:
        return BBox(self.xs[frame], self.ys[frame], self.w, self.h)


def _rect_gap(a: BBox, b: BBox) -> float:
    dx = max(a.x - (b.x + b.w), b.x - (a.x + a.w), 0.0)
    dy = max(a.y - (b.y + b.h), b.y - (a.y + a.h), 0.0)
    return math.hypot(dx, dy)


def _sample_trajectory(spec: SequenceSpec, rng: SplitMix64) -> _Trajectory:
    for _ in range(200):
        w = rng.uniform(spec.size_min, spec.size_max)
        h = rng.uniform(spec.size_min, spec.size_max)
        speed = rng.uniform(spec.velocity_min, spec.velocity_max)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        dxs = [0.0]
        dys = [0.0]
        vx = speed * math.cos(angle)
        vy = speed * math.sin(angle)
        for _f in range(1, spec.n_frames):
            dxs.append(dxs[-1] + vx)
            dys.append(dys[-1] + vy)
            if spec.turn_rate:
                c, s = math.cos(spec.turn_rate), math.sin(spec.turn_rate)
                vx, vy = vx * c - vy * s, vx * s + vy * c
        x_lo, x_hi = -min(dxs), spec.image_width - w - max(dxs)
        y_lo, y_hi = -min(dys), spec.image_height - h - max(dys)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        x0 = rng.uniform(x_lo, x_hi)
        y0 = rng.uniform(y_lo, y_hi)
        return _Trajectory(w, h, tuple(x0 + d for d in dxs), tuple(y0 + d for d in dys))
    raise ValueError("could not fit a trajectory inside the image; lower the velocity range")


def _sample_layout(spec: SequenceSpec, rng: SplitMix64) -> list[_Trajectory]:
    trajectories: list[_Trajectory] = []
    for _obj in range(spec.n_objects):
        placed = False
        for _ in range(200):
            cand = _sample_trajectory(spec, rng)
            if spec.min_separation > 0:
                ok = all(
                    _rect_gap(cand.box(f), other.box(f)) >= spec.min_separation
                    for other in trajectories
                    for f in range(spec.n_frames)
                )
                if not ok:
                    continue
            trajectories.append(cand)
            placed = True
            break
        if not placed:
            raise ValueError(
                "could not place objects at the requested separation; "
                "shrink min_separation or n_objects"
            )
    return trajectories


def _clip_box(box: BBox, width: int, height: int) -> BBox:
    x1 = min(max(box.x, 0.0), float(width))
    y1 = min(max(box.y, 0.0), float(height))
    x2 = min(max(box.x + box.w, 0.0), float(width))
    y2 = min(max(box.y + box.h, 0.0), float(height))
    return BBox(x1, y1, max(x2 - x1, 0.0), max(y2 - y1, 0.0))


def _box_mask(box: BBox, width: int, height: int) -> RleMask:
    c0 = min(max(int(round(box.x)), 0), width - 1)
    r0 = min(max(int(round(box.y)), 0), height - 1)
    c1 = min(max(int(round(box.x + box.w)), c0 + 1), width)
    r1 = min(max(int(round(box.y + box.h)), r0 + 1), height)
    grid = np.zeros((height, width), dtype=bool)
    grid[r0:r1, c0:c1] = True
    return rle_encode(grid)


def _clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def simulate(spec: SequenceSpec) -> tuple[GtSet, DetectionSet]:
    """Generate (ground truth, noisy detections) for one sequence.

    Deterministic for a given spec.  Draw order is fixed: trajectories and
    canonical embeddings up front, then per frame and per object the drop
    decision, positional jitter, score noise, and embedding noise, then the
    frame's clutter count and clutter attributes.
    """
    rng = SplitMix64(spec.rng_seed)
    trajectories = _sample_layout(spec, rng)
    canon = [rng.unit_vector(spec.embedding_dim) for _ in range(spec.n_objects)]

    images = [ImageInfo(f + 1, spec.image_width, spec.image_height) for f in range(spec.n_frames)]
    videos = [VideoInfo(spec.video_id, tuple(img.id for img in images))]

    annotations: list[GtAnnotation] = []
    detections: list[Detection] = []
    ann_id = 0
    for f in range(spec.n_frames):
        image_id = f + 1
        gt_boxes = []
        for obj, traj in enumerate(trajectories):
            box = _clip_box(traj.box(f), spec.image_width, spec.image_height)
            gt_boxes.append(box)
            ann_id += 1
            annotations.append(
                GtAnnotation(
                    image_id=image_id,
                    instance_id=obj + 1,
                    bbox=box,
                    category_id=1,
                    mask=_box_mask(box, spec.image_width, spec.image_height)
                    if spec.include_masks
                    else None,
                    video_id=spec.video_id,
                    ann_id=ann_id,
                )
            )
        for obj, box in enumerate(gt_boxes):
            if rng.random() < spec.drop_rate:
                continue
            if spec.jitter_sigma > 0:
                dx = rng.normal(0.0, spec.jitter_sigma)
                dy = rng.normal(0.0, spec.jitter_sigma)
                jittered = _clip_box(
                    BBox(box.x + dx, box.y + dy, box.w, box.h),
                    spec.image_width,
                    spec.image_height,
                )
            else:
                jittered = box
            score = 1.0
            if spec.score_noise_sigma > 0:
                score = _clamp01(1.0 - abs(rng.normal(0.0, spec.score_noise_sigma)))
            embedding = canon[obj]
            if spec.embedding_noise_sigma > 0:
                noise = np.array(
                    [rng.normal(0.0, spec.embedding_noise_sigma) for _ in range(spec.embedding_dim)]
                )
                noisy = canon[obj] + noise
                norm = np.linalg.norm(noisy)
                embedding = noisy / norm if norm > 0 else canon[obj]
            detections.append(
                Detection(
                    frame_id=f,
                    image_id=image_id,
                    bbox=jittered,
                    score=score,
                    category_id=1,
                    mask=_box_mask(jittered, spec.image_width, spec.image_height)
                    if spec.include_masks
                    else None,
                    embedding=embedding,
                )
            )
        for _ in range(rng.poisson(spec.clutter_rate)):
            w = rng.uniform(spec.size_min, spec.size_max)
            h = rng.uniform(spec.size_min, spec.size_max)
            x = rng.uniform(0.0, spec.image_width - w)
            y = rng.uniform(0.0, spec.image_height - h)
            box = BBox(x, y, w, h)
            score = rng.random()
            embedding = rng.unit_vector(spec.embedding_dim)
            detections.append(
                Detection(
                    frame_id=f,
                    image_id=image_id,
                    bbox=box,
                    score=score,
                    category_id=1,
                    mask=_box_mask(box, spec.image_width, spec.image_height)
                    if spec.include_masks
                    else None,
                    embedding=embedding,
                )
            )

    gts = GtSet(annotations, images, videos)
    dets = DetectionSet(detections, {img.id: img for img in images}, {videos[0].id: videos[0]})
    return gts, dets
