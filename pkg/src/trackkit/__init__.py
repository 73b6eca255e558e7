"""Tracking-by-detection toolkit: filtering, Kalman+Hungarian tracking, AR@K.

Submodules map one-to-one onto the pipeline stages: :mod:`~trackkit.geometry`
(boxes, RLE masks, IoU), :mod:`~trackkit.detset` (COCO-style data model and
I/O), :mod:`~trackkit.filters` (topK / threshold / NMS / EMA),
:mod:`~trackkit.kalman`, :mod:`~trackkit.assoc` (costs and assignment),
:mod:`~trackkit.tracker`, :mod:`~trackkit.evaluation` (AR@K over frames and
tracks), :mod:`~trackkit.sim` (synthetic sequences), and :mod:`~trackkit.cli`.
"""

from .assoc import INFEASIBLE, Assignment, AssocWeights, appearance_distance, build_cost, hungarian
from .detset import (
    Detection,
    DetectionSet,
    FormatError,
    GtAnnotation,
    GtSet,
    ImageInfo,
    VideoInfo,
    class_agnostic_merge,
    load_coco,
    save_annotations,
    save_results,
)
from .evaluation import EvalConfig, EvalResult, TrackInstance, ar_at_k, report, track_ar
from .filters import FilterPolicy, ema_update, filter_threshold, filter_topk, nms, pseudo_label
from .geometry import BBox, RleMask, box_iou, mask_iou, rle_decode, rle_encode
from .kalman import KalmanState, from_state, gating_distance, initiate, predict, to_measurement, update
from .sim import SequenceSpec, SplitMix64, simulate
from .tracker import Track, Tracker, TrackerConfig, count_id_switches, run_sequence

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "AssocWeights",
    "BBox",
    "Detection",
    "DetectionSet",
    "EvalConfig",
    "EvalResult",
    "FilterPolicy",
    "FormatError",
    "GtAnnotation",
    "GtSet",
    "ImageInfo",
    "INFEASIBLE",
    "KalmanState",
    "RleMask",
    "SequenceSpec",
    "SplitMix64",
    "Track",
    "Tracker",
    "TrackerConfig",
    "TrackInstance",
    "VideoInfo",
    "appearance_distance",
    "ar_at_k",
    "box_iou",
    "build_cost",
    "class_agnostic_merge",
    "count_id_switches",
    "ema_update",
    "filter_threshold",
    "filter_topk",
    "from_state",
    "gating_distance",
    "hungarian",
    "initiate",
    "load_coco",
    "mask_iou",
    "nms",
    "predict",
    "pseudo_label",
    "report",
    "rle_decode",
    "rle_encode",
    "run_sequence",
    "save_annotations",
    "save_results",
    "simulate",
    "to_measurement",
    "track_ar",
    "update",
]
