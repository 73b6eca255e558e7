"""Online tracking-by-detection: predict, associate, update, manage lifecycles.

Per frame the tracker score-filters and NMS-suppresses the detections, runs a
Kalman predict on every live track, associates confirmed tracks first (a
cascade from freshest to stalest) and tentative tracks second (IoU only), then
updates, spawns, ages, and deletes.  Emitted boxes are the matched detections
stamped with the track id; masks ride along as payload, association uses boxes
only.  A tracker instance is single-threaded; run one per sequence.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .assoc import GATE_CHI2_95_4DOF, AssocWeights, build_cost, hungarian
from .detset import Detection, DetectionSet, GtAnnotation
from .filters import FilterPolicy, filter_threshold, nms, pseudo_label
from .geometry import BBox, RleMask, box_iou
from .kalman import (
    STD_WEIGHT_POSITION,
    STD_WEIGHT_VELOCITY,
    KalmanState,
    initiate,
    predict,
    to_measurement,
    update,
)

__all__ = [
    "TENTATIVE",
    "CONFIRMED",
    "DELETED",
    "TrackerConfig",
    "TrackEntry",
    "Track",
    "Tracker",
    "run_sequence",
    "count_id_switches",
]

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
DELETED = "deleted"


@dataclass(frozen=True)
class TrackerConfig:
    """All tracker tunables; defaults follow the common reference settings."""

    score_thresh: float = 0.0
    nms_iou: float = 0.7
    policy: FilterPolicy | None = None
    n_init: int = 3
    max_age: int = 30
    gallery_budget: int = 100
    lam: float = 0.0
    gate_chi2: float = GATE_CHI2_95_4DOF
    max_appearance: float = 0.4
    max_iou_cost: float = 0.7
    kalman_pos_weight: float = STD_WEIGHT_POSITION
    kalman_vel_weight: float = STD_WEIGHT_VELOCITY

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError(f"n_init must be >= 1, got {self.n_init}")
        if self.max_age < 1:
            raise ValueError(f"max_age must be >= 1, got {self.max_age}")
        if self.gallery_budget < 1:
            raise ValueError(f"gallery_budget must be >= 1, got {self.gallery_budget}")

    def weights(self) -> AssocWeights:
        return AssocWeights(
            lam=self.lam,
            gate_chi2=self.gate_chi2,
            max_appearance=self.max_appearance,
            max_iou_cost=self.max_iou_cost,
        )


@dataclass(frozen=True)
class TrackEntry:
    """One emitted frame of a track."""

    frame_id: int
    image_id: int
    bbox: BBox
    mask: RleMask | None
    score: float


@dataclass
class Track:
    """A tracked identity with lifecycle status and appearance gallery."""

    track_id: int
    state: KalmanState
    status: str = TENTATIVE
    hits: int = 1
    time_since_update: int = 0
    gallery: deque = field(default_factory=deque)
    history: list[TrackEntry] = field(default_factory=list)
    video_id: int | None = None

    @property
    def boxes(self) -> dict[int, BBox]:
        return {e.image_id: e.bbox for e in self.history}

    @property
    def masks(self) -> dict[int, RleMask | None]:
        return {e.image_id: e.mask for e in self.history}

    @property
    def mean_score(self) -> float:
        if not self.history:
            return 0.0
        return sum(e.score for e in self.history) / len(self.history)


class Tracker:
    """Stateful per-sequence tracker; feed frames in strictly increasing order."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_frame: int | None = None

    def live_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.status != DELETED]

    def _new_track(self, det: Detection) -> Track:
        cfg = self.config
        state = initiate(
            to_measurement(det.bbox), cfg.kalman_pos_weight, cfg.kalman_vel_weight
        )
        track = Track(self._next_id, state, gallery=deque(maxlen=cfg.gallery_budget))
        if det.embedding is not None:
            track.gallery.append(det.embedding)
        if track.hits >= cfg.n_init:
            track.status = CONFIRMED
        self._next_id += 1
        self.tracks.append(track)
        return track

    def step(self, frame_id: int, detections) -> list[tuple[int, Detection]]:
        """Advance one frame; returns (track_id, detection) for confirmed tracks."""
        if self._last_frame is not None and frame_id <= self._last_frame:
            raise ValueError(
                f"frame_id must be strictly increasing, got {frame_id} after {self._last_frame}"
            )
        self._last_frame = frame_id
        cfg = self.config

        dets = filter_threshold(list(detections), cfg.score_thresh)
        dets = nms(dets, cfg.nms_iou)
        if cfg.policy is not None:
            dets = pseudo_label(dets, cfg.policy)

        live = self.live_tracks()
        for track in live:
            track.state = predict(track.state, cfg.kalman_pos_weight, cfg.kalman_vel_weight)
            track.time_since_update += 1

        weights = cfg.weights()
        matches: list[tuple[Track, Detection]] = []
        free = list(range(len(dets)))

        # cascade over confirmed tracks, freshest first
        confirmed = [t for t in live if t.status == CONFIRMED and t.time_since_update <= cfg.max_age]
        for age in sorted({t.time_since_update for t in confirmed}):
            if not free:
                break
            level = [t for t in confirmed if t.time_since_update == age]
            cost = build_cost(level, [dets[j] for j in free], weights)
            assignment = hungarian(cost)
            taken = []
            for row, col in assignment.matches:
                matches.append((level[row], dets[free[col]]))
                taken.append(free[col])
            free = [j for j in free if j not in taken]

        # tentative tracks get a final IoU-only pass
        tentative = [t for t in live if t.status == TENTATIVE]
        if tentative and free:
            cost = build_cost(
                tentative, [dets[j] for j in free], weights, use_appearance=False
            )
            assignment = hungarian(cost)
            taken = []
            for row, col in assignment.matches:
                matches.append((tentative[row], dets[free[col]]))
                taken.append(free[col])
            free = [j for j in free if j not in taken]

        matched_ids = set()
        for track, det in matches:
            track.state = update(
                track.state,
                to_measurement(det.bbox),
                cfg.kalman_pos_weight,
                cfg.kalman_vel_weight,
            )
            track.hits += 1
            track.time_since_update = 0
            if det.embedding is not None:
                track.gallery.append(det.embedding)
            if track.status == TENTATIVE and track.hits >= cfg.n_init:
                track.status = CONFIRMED
            matched_ids.add(track.track_id)

        for track in live:
            if track.track_id in matched_ids:
                continue
            if track.status == TENTATIVE or track.time_since_update > cfg.max_age:
                track.status = DELETED

        spawned = [(self._new_track(dets[j]), dets[j]) for j in free]

        emitted: list[tuple[int, Detection]] = []
        for track, det in sorted(matches + spawned, key=lambda m: m[0].track_id):
            if track.status != CONFIRMED:
                continue
            track.history.append(
                TrackEntry(frame_id, det.image_id, det.bbox, det.mask, det.score)
            )
            emitted.append((track.track_id, dataclasses.replace(det, track_id=track.track_id)))
        return emitted


def run_sequence(
    config: TrackerConfig | None,
    detections: DetectionSet,
    video_id: int | None = None,
) -> list[Track]:
    """Track one video; returns every track that ever emitted history.

    Frame order comes from the video table; sets without one fall back to
    ascending image id.  Deterministic for identical inputs.
    """
    if video_id is None and len(detections.videos) == 1:
        video_id = next(iter(detections.videos))
    elif video_id is None and len(detections.videos) > 1:
        raise ValueError("detection set holds several videos; pass video_id")
    if video_id is not None:
        frames = list(detections.videos[video_id].frame_ids)
    else:
        frames = detections.image_ids
    if not frames:
        raise ValueError("empty frame list")
    tracker = Tracker(config)
    for index, image_id in enumerate(frames):
        tracker.step(index, detections.by_image(image_id))
    finished = [t for t in tracker.tracks if t.history]
    for track in finished:
        track.video_id = video_id
    return finished


def count_id_switches(
    pred_tracks,
    gts: list[GtAnnotation],
    frame_order=None,
    iou_thresh: float = 0.5,
) -> int:
    """CLEAR-MOT style identity switches of predicted tracks against GT.

    Per frame, GT instances are matched to predicted boxes one-to-one
    (minimum total 1-IoU over pairs with IoU >= ``iou_thresh``); a switch is
    counted whenever a GT instance's matched track id differs from the id it
    was matched to the last time it was matched at all.  Frames default to
    ascending image id; pass ``frame_order`` when ids are not temporal.
    """
    preds_by_frame: dict[int, list[tuple[int, BBox]]] = {}
    for track in pred_tracks:
        for image_id, bbox in track.boxes.items():
            preds_by_frame.setdefault(image_id, []).append((track.track_id, bbox))
    gts_by_frame: dict[int, list[GtAnnotation]] = {}
    for ann in gts:
        gts_by_frame.setdefault(ann.image_id, []).append(ann)

    frames = list(frame_order) if frame_order is not None else sorted(gts_by_frame)
    last_id: dict[tuple[int | None, int], int] = {}
    switches = 0
    for frame in frames:
        gt_list = gts_by_frame.get(frame, [])
        pred_list = sorted(preds_by_frame.get(frame, []), key=lambda p: p[0])
        if not gt_list or not pred_list:
            continue
        cost = np.full((len(gt_list), len(pred_list)), np.inf)
        for i, ann in enumerate(gt_list):
            for j, (_tid, box) in enumerate(pred_list):
                iou = box_iou(ann.bbox, box)
                if iou >= iou_thresh:
                    cost[i, j] = 1.0 - iou
        for row, col in hungarian(cost).matches:
            ann = gt_list[row]
            tid = pred_list[col][0]
            key = (ann.video_id, ann.instance_id)
            if key in last_id and last_id[key] != tid:
                switches += 1
            last_id[key] = tid
    return switches
