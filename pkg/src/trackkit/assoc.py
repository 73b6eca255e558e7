"""Cost construction and minimum-cost assignment for track/detection pairing.

Cost matrices are plain 2-D float arrays; :data:`INFEASIBLE` (``inf``) marks
cells that must never be matched.  :func:`hungarian` returns, among all
assignments of maximum cardinality over the finite cells, the one of minimum
total cost, and among cost ties the lexicographically smallest match list
(sorted by row, compared as (row, col) pairs).  The optimal value is obtained
from ``scipy.optimize.linear_sum_assignment`` on a sentinel-padded square
matrix; a greedy fix-and-verify pass then pins down the canonical match set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import box_iou
from .kalman import from_state, gating_distance, to_measurement

__all__ = [
    "INFEASIBLE",
    "GATE_CHI2_95_4DOF",
    "Assignment",
    "AssocWeights",
    "hungarian",
    "appearance_distance",
    "build_cost",
]

INFEASIBLE = np.inf

# 95th percentile of chi-square with 4 degrees of freedom: the standard
# Mahalanobis gate for 4-dim box measurements.
GATE_CHI2_95_4DOF = 9.4877


@dataclass(frozen=True)
class Assignment:
    """Matched (row, col) pairs plus the rows and cols left unmatched."""

    matches: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]

    def total_cost(self, cost: np.ndarray) -> float:
        return float(sum(cost[r, c] for r, c in self.matches))


def _solve_value(cost: np.ndarray, finite: np.ndarray) -> tuple[int, float]:
    # (max cardinality over finite cells, min total cost at that cardinality)
    rows, cols = cost.shape
    if rows == 0 or cols == 0 or not finite.any():
        return 0, 0.0
    n = max(rows, cols)
    shift = float(cost[finite].min())
    shifted = np.zeros_like(cost)
    shifted[finite] = cost[finite] - shift
    sentinel = float(shifted[finite].sum()) + 1.0
    padded = np.full((n, n), sentinel)
    view = padded[:rows, :cols]
    view[finite] = shifted[finite]
    rr, cc = linear_sum_assignment(padded)
    cardinality = 0
    total = 0.0
    for r, c in zip(rr, cc):
        if r < rows and c < cols and finite[r, c]:
            cardinality += 1
            total += float(cost[r, c])
    return cardinality, total


def hungarian(cost: np.ndarray) -> Assignment:
    """Minimum-cost assignment over the finite cells of a rectangular matrix.

    All-infeasible (or empty) input yields an assignment with no matches.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {cost.shape}")
    rows, cols = cost.shape
    finite = np.isfinite(cost)
    target_card, target_total = _solve_value(cost, finite)

    matches: list[tuple[int, int]] = []
    col_free = np.ones(cols, dtype=bool)
    spent = 0.0
    for r in range(rows):
        if len(matches) == target_card:
            break
        need_card = target_card - len(matches) - 1
        need_total = target_total - spent
        tail = np.arange(r + 1, rows)
        for c in range(cols):
            if not col_free[c] or not finite[r, c]:
                continue
            keep = col_free.copy()
            keep[c] = False
            sub = cost[np.ix_(tail, np.flatnonzero(keep))]
            card, total = _solve_value(sub, np.isfinite(sub))
            if card == need_card and math.isclose(
                total + cost[r, c], need_total, rel_tol=1e-12, abs_tol=1e-12
            ):
                matches.append((r, c))
                col_free[c] = False
                spent += float(cost[r, c])
                break

    matched_rows = {r for r, _ in matches}
    return Assignment(
        matches=tuple(matches),
        unmatched_rows=tuple(r for r in range(rows) if r not in matched_rows),
        unmatched_cols=tuple(np.flatnonzero(col_free).tolist()),
    )


def appearance_distance(gallery, embedding) -> float:
    """Smallest cosine distance between ``embedding`` and any gallery vector.

    All vectors are expected unit-norm; the result lies in [0, 2] and never
    increases as the gallery grows.
    """
    g = np.asarray(gallery, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.size == 0:
        raise ValueError("gallery must be non-empty")
    e = np.asarray(embedding, dtype=float)
    if g.shape[1] != e.shape[0]:
        raise ValueError(f"dimension mismatch: gallery {g.shape[1]} vs embedding {e.shape[0]}")
    return float(np.clip(np.min(1.0 - g @ e), 0.0, 2.0))


@dataclass(frozen=True)
class AssocWeights:
    """Tunables of the combined association cost.

    ``lam`` blends gating-normalized motion cost with appearance distance;
    the default 0 uses appearance alone with motion purely as a gate.
    """

    lam: float = 0.0
    gate_chi2: float = GATE_CHI2_95_4DOF
    max_appearance: float = 0.4
    max_iou_cost: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")


def build_cost(tracks, detections, weights: AssocWeights, use_appearance: bool = True) -> np.ndarray:
    """Track-by-detection cost matrix with gating.

    Tracks must expose ``state`` (a predicted :class:`~trackkit.kalman.KalmanState`)
    and ``gallery`` (appearance vectors; may be empty).  A cell blends
    motion and appearance when an embedding and a gallery are available,
    otherwise falls back to ``1 - box_iou``; cells failing the Mahalanobis,
    appearance, or IoU-cost gate are :data:`INFEASIBLE`.
    """
    cost = np.full((len(tracks), len(detections)), INFEASIBLE)
    for i, track in enumerate(tracks):
        state = track.state
        predicted_box = from_state(state)
        gallery = list(track.gallery)
        for j, det in enumerate(detections):
            measurement = to_measurement(det.bbox)
            motion = gating_distance(state, measurement)
            if motion > weights.gate_chi2:
                continue
            if use_appearance and det.embedding is not None and gallery:
                appearance = appearance_distance(gallery, det.embedding)
                if appearance > weights.max_appearance:
                    continue
                cost[i, j] = (
                    weights.lam * (motion / weights.gate_chi2)
                    + (1.0 - weights.lam) * appearance
                )
            else:
                iou_cost = 1.0 - box_iou(predicted_box, det.bbox)
                if iou_cost > weights.max_iou_cost:
                    continue
                cost[i, j] = iou_cost
    return cost
