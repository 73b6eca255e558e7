"""Detection filtering policies and the teacher-parameter moving average.

Covers the two pseudo-label filters (confidence threshold and topK), greedy
hard NMS on box IoU, and the exponential-moving-average update that keeps a
teacher parameter vector trailing a student.  Score ties in topK and NMS break
by ascending original index so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detset import Detection
from .geometry import box_iou

__all__ = [
    "FilterPolicy",
    "filter_topk",
    "filter_threshold",
    "nms",
    "ema_update",
    "pseudo_label",
]


@dataclass(frozen=True)
class FilterPolicy:
    """Either keep the top ``k`` detections or keep scores at or above ``tau``."""

    kind: str
    tau: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind == "topk":
            if self.k is None or self.tau is not None:
                raise ValueError("topk policy takes k and no tau")
            if self.k < 1:
                raise ValueError(f"k must be >= 1, got {self.k}")
        elif self.kind == "threshold":
            if self.tau is None or self.k is not None:
                raise ValueError("threshold policy takes tau and no k")
            if not 0.0 <= self.tau <= 1.0:
                raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def topk(cls, k: int) -> "FilterPolicy":
        return cls("topk", k=k)

    @classmethod
    def threshold(cls, tau: float) -> "FilterPolicy":
        return cls("threshold", tau=tau)


def filter_topk(dets: list[Detection], k: int) -> list[Detection]:
    """Keep the ``k`` highest-score detections, in descending score order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    return [dets[i] for i in order[:k]]


def filter_threshold(dets: list[Detection], tau: float) -> list[Detection]:
    """Keep detections with score >= ``tau``, original order preserved."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return [d for d in dets if d.score >= tau]


def nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy hard non-maximum suppression on box IoU.

    Detections are visited in descending score (ties by original index); one is
    kept iff its IoU with every already-kept detection is below ``iou_thresh``.
    """
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in [0, 1], got {iou_thresh}")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept: list[Detection] = []
    for i in order:
        if all(box_iou(dets[i].bbox, other.bbox) < iou_thresh for other in kept):
            kept.append(dets[i])
    return kept


def ema_update(teacher: np.ndarray, student: np.ndarray, momentum: float) -> np.ndarray:
    """Elementwise ``momentum * teacher + (1 - momentum) * student``."""
    teacher = np.asarray(teacher, dtype=float)
    student = np.asarray(student, dtype=float)
    if teacher.shape != student.shape:
        raise ValueError(f"shape mismatch: {teacher.shape} vs {student.shape}")
    if not np.all(np.isfinite(teacher)) or not np.all(np.isfinite(student)):
        raise ValueError("parameter vectors must be finite")
    if not 0.0 <= momentum <= 1.0:
        raise ValueError(f"momentum must be in [0, 1], got {momentum}")
    return momentum * teacher + (1.0 - momentum) * student


def pseudo_label(dets: list[Detection], policy: FilterPolicy) -> list[Detection]:
    """Apply the configured filter; the output is the pseudo-label set."""
    if policy.kind == "topk":
        return filter_topk(dets, policy.k)
    return filter_threshold(dets, policy.tau)
