"""Class-agnostic Average Recall over frames and over video tracks.

``ar_at_k`` pools greedy score-descending matches across images and sweeps a
set of IoU thresholds; ``track_ar`` does the same over whole tracks using a
spatio-temporal IoU in which a frame covered by only one side contributes
that side's full area to the union.  Matching is COCO-style greedy, bounded
against an optimal-matching oracle in the test suite.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .detset import (
    DetectionSet,
    FormatError,
    GtAnnotation,
    GtSet,
    class_agnostic_merge,
)
from .geometry import (
    BBox,
    RleMask,
    box_intersection_area,
    box_iou,
    mask_intersection_area,
    mask_iou,
)

__all__ = [
    "DEFAULT_IOU_THRESHOLDS",
    "EvalConfig",
    "EvalResult",
    "TrackInstance",
    "ar_at_k",
    "track_ar",
    "tracks_from_detections",
    "report",
]

DEFAULT_IOU_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)


@dataclass(frozen=True)
class EvalConfig:
    max_dets: int = 100
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    iou_kind: str = "box"
    class_agnostic: bool = True

    def __post_init__(self):
        if self.max_dets < 1:
            raise ValueError(f"max_dets must be >= 1, got {self.max_dets}")
        thresholds = tuple(float(t) for t in self.iou_thresholds)
        object.__setattr__(self, "iou_thresholds", thresholds)
        if not thresholds:
            raise ValueError("need at least one IoU threshold")
        for t in thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"thresholds must lie in (0, 1], got {t}")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if self.iou_kind not in ("box", "mask"):
            raise ValueError(f"iou_kind must be 'box' or 'mask', got {self.iou_kind!r}")


@dataclass(frozen=True)
class EvalResult:
    """Average recall plus its per-threshold and per-image breakdown."""

    ar: float
    recall_per_threshold: tuple[tuple[float, float], ...]
    gt_per_image: dict[int, int] = field(default_factory=dict)
    matched_per_image: dict[int, dict[float, int]] = field(default_factory=dict)
    max_dets: int = 100


def _greedy_match_counts(iou: np.ndarray, pred_cats, gt_cats, thresholds, agnostic):
    # iou: (n_pred, n_gt) with predictions already in descending-score order
    counts = {}
    n_pred, n_gt = iou.shape
    for t in thresholds:
        taken = np.zeros(n_gt, dtype=bool)
        matched = 0
        for p in range(n_pred):
            best_gt = -1
            best_iou = 0.0
            for g in range(n_gt):
                if taken[g]:
                    continue
                if not agnostic and pred_cats[p] != gt_cats[g]:
                    continue
                if iou[p, g] >= t and iou[p, g] > best_iou:
                    best_iou = iou[p, g]
                    best_gt = g
            if best_gt >= 0:
                taken[best_gt] = True
                matched += 1
        counts[t] = matched
    return counts


def _pair_iou(
    pred_box: BBox,
    pred_mask: RleMask | None,
    gt_box: BBox,
    gt_mask: RleMask | None,
    kind: str,
    where: str,
) -> float:
    if kind == "box":
        return box_iou(pred_box, gt_box)
    if pred_mask is None or gt_mask is None:
        raise FormatError(f"{where}: mask-mode evaluation needs masks on both sides")
    return mask_iou(pred_mask, gt_mask)


def _image_counts(preds, gt_list, cfg: EvalConfig, image_id: int):
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))[: cfg.max_dets]
    ranked = [preds[i] for i in order]
    iou = np.zeros((len(ranked), len(gt_list)))
    for p, det in enumerate(ranked):
        for g, ann in enumerate(gt_list):
            iou[p, g] = _pair_iou(
                det.bbox, det.mask, ann.bbox, ann.mask, cfg.iou_kind, f"image {image_id}"
            )
    return _greedy_match_counts(
        iou,
        [d.category_id for d in ranked],
        [a.category_id for a in gt_list],
        cfg.iou_thresholds,
        cfg.class_agnostic,
    )


def ar_at_k(
    preds: DetectionSet,
    gts,
    cfg: EvalConfig | None = None,
    jobs: int = 1,
) -> EvalResult:
    """Average recall of the top ``max_dets`` predictions per image.

    ``gts`` is a :class:`GtSet` or plain list of annotations.  Every
    prediction must refer to an image known on the GT side.
    """
    cfg = cfg or EvalConfig()
    gt_anns = list(gts)
    known_images = set(gts.images) if isinstance(gts, GtSet) else {a.image_id for a in gt_anns}
    for det in preds:
        if det.image_id not in known_images:
            raise FormatError(f"prediction references unknown image {det.image_id}")
    if cfg.class_agnostic:
        gt_anns = class_agnostic_merge(gt_anns)
        preds = class_agnostic_merge(preds)

    gt_by_image: dict[int, list[GtAnnotation]] = {}
    for ann in gt_anns:
        gt_by_image.setdefault(ann.image_id, []).append(ann)

    image_ids = sorted(gt_by_image)
    if jobs > 1 and len(image_ids) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_image = dict(
                zip(
                    image_ids,
                    pool.map(
                        lambda i: _image_counts(list(preds.by_image(i)), gt_by_image[i], cfg, i),
                        image_ids,
                    ),
                )
            )
    else:
        per_image = {
            i: _image_counts(list(preds.by_image(i)), gt_by_image[i], cfg, i)
            for i in image_ids
        }

    total_gt = len(gt_anns)
    recalls = []
    for t in cfg.iou_thresholds:
        matched = sum(per_image[i][t] for i in image_ids)
        recalls.append((t, matched / total_gt if total_gt else 0.0))
    ar = sum(r for _, r in recalls) / len(recalls)
    return EvalResult(
        ar=ar,
        recall_per_threshold=tuple(recalls),
        gt_per_image={i: len(gt_by_image[i]) for i in image_ids},
        matched_per_image=per_image,
        max_dets=cfg.max_dets,
    )


@dataclass
class TrackInstance:
    """A track as the evaluator sees it: per-image boxes/masks plus a rank score."""

    track_id: int
    video_id: int | None
    boxes: dict[int, BBox]
    masks: dict[int, RleMask | None] = field(default_factory=dict)
    scores: dict[int, float] = field(default_factory=dict)
    category_id: int = 1

    @property
    def mean_score(self) -> float:
        if not self.scores:
            return 0.0
        return sum(self.scores.values()) / len(self.scores)


def _as_instances(pred_tracks) -> list[TrackInstance]:
    instances = []
    for track in pred_tracks:
        if isinstance(track, TrackInstance):
            instances.append(track)
            continue
        entries = track.history  # tracker.Track
        instances.append(
            TrackInstance(
                track_id=track.track_id,
                video_id=getattr(track, "video_id", None),
                boxes={e.image_id: e.bbox for e in entries},
                masks={e.image_id: e.mask for e in entries},
                scores={e.image_id: e.score for e in entries},
            )
        )
    return instances


def tracks_from_detections(dset: DetectionSet) -> list[TrackInstance]:
    """Group a result set that carries ``track_id`` fields into track instances."""
    video_of_image: dict[int, int] = {}
    for video in dset.videos.values():
        for image_id in video.frame_ids:
            video_of_image[image_id] = video.id
    grouped: dict[tuple[int | None, int], TrackInstance] = {}
    for i, det in enumerate(dset):
        if det.track_id is None:
            raise FormatError(f"result #{i} has no track_id; cannot evaluate tracks")
        video_id = video_of_image.get(det.image_id)
        key = (video_id, det.track_id)
        inst = grouped.get(key)
        if inst is None:
            inst = TrackInstance(det.track_id, video_id, {}, {}, {}, det.category_id)
            grouped[key] = inst
        inst.boxes[det.image_id] = det.bbox
        inst.masks[det.image_id] = det.mask
        inst.scores[det.image_id] = det.score
    return [grouped[k] for k in sorted(grouped, key=lambda k: (k[0] is not None, k[0], k[1]))]


def _st_iou(pred: TrackInstance, gt: TrackInstance, kind: str) -> float:
    # frames covered by only one side contribute that side's area to the union
    frames = set(pred.boxes) | set(gt.boxes)
    inter = 0.0
    union = 0.0
    for f in frames:
        p = pred.boxes.get(f)
        g = gt.boxes.get(f)
        if kind == "mask":
            pm = pred.masks.get(f)
            gm = gt.masks.get(f)
            if (p is not None and pm is None) or (g is not None and gm is None):
                raise FormatError("mask-mode track evaluation needs masks on both sides")
            p_area = pm.area if pm is not None else 0
            g_area = gm.area if gm is not None else 0
            i = mask_intersection_area(pm, gm) if pm is not None and gm is not None else 0
        else:
            p_area = p.area if p is not None else 0.0
            g_area = g.area if g is not None else 0.0
            i = box_intersection_area(p, g) if p is not None and g is not None else 0.0
        inter += i
        union += p_area + g_area - i
    if union <= 0:
        return 0.0
    return inter / union


def _gt_tracks(gts) -> list[TrackInstance]:
    anns = list(gts)
    videos = gts.videos if isinstance(gts, GtSet) else {}
    video_of_image: dict[int, int] = {}
    for video in videos.values():
        for image_id in video.frame_ids:
            video_of_image[image_id] = video.id
    grouped: dict[tuple[int | None, int], TrackInstance] = {}
    for ann in anns:
        video_id = ann.video_id if ann.video_id is not None else video_of_image.get(ann.image_id)
        key = (video_id, ann.instance_id)
        inst = grouped.get(key)
        if inst is None:
            inst = TrackInstance(ann.instance_id, video_id, {}, {}, {}, ann.category_id)
            grouped[key] = inst
        inst.boxes[ann.image_id] = ann.bbox
        inst.masks[ann.image_id] = ann.mask
        inst.scores[ann.image_id] = 1.0
    return [grouped[k] for k in sorted(grouped, key=lambda k: (k[0] is not None, k[0], k[1]))]


def track_ar(pred_tracks, gts, cfg: EvalConfig | None = None) -> EvalResult:
    """Average recall of predicted tracks under spatio-temporal IoU.

    At most ``max_dets`` tracks per video, ranked by mean score, enter the
    same greedy threshold sweep as :func:`ar_at_k`; recall pools GT tracks
    over all videos.
    """
    cfg = cfg or EvalConfig()
    preds = _as_instances(pred_tracks)
    gt_tracks = _gt_tracks(gts)
    if isinstance(gts, GtSet) and not gts.videos and any(
        t.video_id is None for t in gt_tracks
    ):
        raise FormatError("track evaluation needs a video table or per-record video ids")

    videos = sorted(
        {t.video_id for t in gt_tracks} | {t.video_id for t in preds},
        key=lambda v: (v is not None, v),
    )
    matched: dict[float, int] = {t: 0 for t in cfg.iou_thresholds}
    per_video_counts: dict[int, dict[float, int]] = {}
    gt_per_video: dict[int, int] = {}
    for video_id in videos:
        key = video_id if video_id is not None else -1
        vid_gt = [t for t in gt_tracks if t.video_id == video_id]
        vid_pred = [t for t in preds if t.video_id == video_id]
        vid_pred.sort(key=lambda t: (-t.mean_score, t.track_id))
        vid_pred = vid_pred[: cfg.max_dets]
        gt_per_video[key] = len(vid_gt)
        if not vid_gt:
            continue
        iou = np.zeros((len(vid_pred), len(vid_gt)))
        for p, pt in enumerate(vid_pred):
            for g, gt in enumerate(vid_gt):
                iou[p, g] = _st_iou(pt, gt, cfg.iou_kind)
        counts = _greedy_match_counts(
            iou,
            [t.category_id for t in vid_pred],
            [t.category_id for t in vid_gt],
            cfg.iou_thresholds,
            cfg.class_agnostic,
        )
        per_video_counts[key] = counts
        for t in cfg.iou_thresholds:
            matched[t] += counts[t]

    total_gt = len(gt_tracks)
    recalls = [(t, matched[t] / total_gt if total_gt else 0.0) for t in cfg.iou_thresholds]
    ar = sum(r for _, r in recalls) / len(recalls)
    return EvalResult(
        ar=ar,
        recall_per_threshold=tuple(recalls),
        gt_per_image=gt_per_video,
        matched_per_image=per_video_counts,
        max_dets=cfg.max_dets,
    )


def report(results, csv: bool = False) -> str:
    """Render (label, EvalResult) rows as a fixed-width table or CSV."""
    rows = list(results)
    if rows:
        thresholds = [t for t, _ in rows[0][1].recall_per_threshold]
        for _, res in rows:
            if [t for t, _ in res.recall_per_threshold] != thresholds:
                raise ValueError("all results in one report must share IoU thresholds")
        ar_header = f"AR@{rows[0][1].max_dets}"
    else:
        thresholds = []
        ar_header = "AR"
    headers = ["label", ar_header] + [f"R@{t:.2f}" for t in thresholds]
    table = [headers]
    for label, res in rows:
        table.append(
            [label, f"{res.ar * 100:.1f}"]
            + [f"{r * 100:.1f}" for _, r in res.recall_per_threshold]
        )
    if csv:
        return "\n".join(",".join(row) for row in table) + "\n"
    widths = [max(len(row[c]) for row in table) for c in range(len(headers))]
    lines = []
    for row in table:
        cells = [row[0].ljust(widths[0])] + [
            row[c].rjust(widths[c]) for c in range(1, len(headers))
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
