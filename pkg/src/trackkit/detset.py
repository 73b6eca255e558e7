"""Data model and COCO-style JSON I/O for detections, ground truth, and results.

The file schemas (annotation files, self-contained result files, compressed
RLE counts strings) are documented bit-exactly in ``docs/format.md``.  Loaded
sets are immutable and freely shareable; loading and saving are single-owner
per file handle.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import BBox, RleMask

__all__ = [
    "FormatError",
    "Detection",
    "GtAnnotation",
    "ImageInfo",
    "VideoInfo",
    "DetectionSet",
    "GtSet",
    "load_coco",
    "save_results",
    "save_annotations",
    "class_agnostic_merge",
    "counts_to_string",
    "string_to_counts",
]


class FormatError(ValueError):
    """An input file violates the documented schema."""


_EMBED_NORM_TOL = 1e-6


def _freeze_embedding(embedding) -> np.ndarray | None:
    if embedding is None:
        return None
    e = np.asarray(embedding, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("embedding must be a non-empty 1-D vector")
    norm = float(np.linalg.norm(e))
    if abs(norm - 1.0) > _EMBED_NORM_TOL:
        raise ValueError(f"embedding must be unit-norm, got |e| = {norm}")
    e = e.copy()
    e.flags.writeable = False
    return e


@dataclass(frozen=True, eq=False)
class Detection:
    """One scored box on one frame, optionally with mask and appearance vector."""

    frame_id: int
    image_id: int
    bbox: BBox
    score: float
    category_id: int = 1
    mask: RleMask | None = None
    embedding: np.ndarray | None = None
    track_id: int | None = None

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError(f"frame_id must be >= 0, got {self.frame_id}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.category_id < 1:
            raise ValueError(f"category_id must be positive, got {self.category_id}")
        object.__setattr__(self, "embedding", _freeze_embedding(self.embedding))

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        if (self.embedding is None) != (other.embedding is None):
            return False
        if self.embedding is not None and not np.array_equal(self.embedding, other.embedding):
            return False
        return (
            self.frame_id,
            self.image_id,
            self.bbox,
            self.score,
            self.category_id,
            self.mask,
            self.track_id,
        ) == (
            other.frame_id,
            other.image_id,
            other.bbox,
            other.score,
            other.category_id,
            other.mask,
            other.track_id,
        )


@dataclass(frozen=True)
class GtAnnotation:
    """Ground-truth instance; ``instance_id`` is stable across frames of one video."""

    image_id: int
    instance_id: int
    bbox: BBox
    category_id: int = 1
    mask: RleMask | None = None
    video_id: int | None = None
    ann_id: int | None = None


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int


@dataclass(frozen=True)
class VideoInfo:
    id: int
    frame_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "frame_ids", tuple(int(f) for f in self.frame_ids))


def _index_images(images) -> dict[int, ImageInfo]:
    if isinstance(images, Mapping):
        return dict(images)
    return {img.id: img for img in images}


def _check_mask_size(mask: RleMask | None, image: ImageInfo, what: str) -> None:
    if mask is None:
        return
    if (mask.height, mask.width) != (image.height, image.width):
        raise FormatError(
            f"{what}: mask size {mask.height}x{mask.width} does not match "
            f"image {image.id} size {image.height}x{image.width}"
        )


class DetectionSet:
    """Detections grouped by image, plus the image table and optional video table."""

    def __init__(
        self,
        detections: Iterable[Detection] = (),
        images: Iterable[ImageInfo] | Mapping[int, ImageInfo] = (),
        videos: Iterable[VideoInfo] | Mapping[int, VideoInfo] = (),
    ):
        self.images = _index_images(images)
        if isinstance(videos, Mapping):
            self.videos = dict(videos)
        else:
            self.videos = {v.id: v for v in videos}
        for video in self.videos.values():
            for frame in video.frame_ids:
                if frame not in self.images:
                    raise FormatError(f"video {video.id} references unknown image {frame}")
        by_image: dict[int, list[Detection]] = {}
        for i, det in enumerate(detections):
            image = self.images.get(det.image_id)
            if image is None:
                raise FormatError(f"detection #{i} references unknown image {det.image_id}")
            _check_mask_size(det.mask, image, f"detection #{i}")
            by_image.setdefault(det.image_id, []).append(det)
        self._by_image = {k: tuple(v) for k, v in by_image.items()}

    def by_image(self, image_id: int) -> tuple[Detection, ...]:
        return self._by_image.get(image_id, ())

    @property
    def image_ids(self) -> list[int]:
        return sorted(self.images)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_image.values())

    def __iter__(self):
        for image_id in sorted(self._by_image):
            yield from self._by_image[image_id]

    def with_detections(self, detections: Iterable[Detection]) -> "DetectionSet":
        """Same image/video tables, different detections."""
        return DetectionSet(detections, self.images, self.videos)

    def for_video(self, video_id: int) -> "DetectionSet":
        video = self.videos.get(video_id)
        if video is None:
            raise KeyError(f"unknown video {video_id}")
        frames = set(video.frame_ids)
        dets = [d for d in self if d.image_id in frames]
        images = {i: self.images[i] for i in video.frame_ids}
        return DetectionSet(dets, images, {video_id: video})


class GtSet(Sequence):
    """Ground-truth annotations plus the image and video tables they refer to."""

    def __init__(
        self,
        annotations: Iterable[GtAnnotation] = (),
        images: Iterable[ImageInfo] | Mapping[int, ImageInfo] = (),
        videos: Iterable[VideoInfo] | Mapping[int, VideoInfo] = (),
    ):
        self.images = _index_images(images)
        if isinstance(videos, Mapping):
            self.videos = dict(videos)
        else:
            self.videos = {v.id: v for v in videos}
        anns = tuple(annotations)
        seen: set[tuple[int | None, int, int]] = set()
        for i, ann in enumerate(anns):
            image = self.images.get(ann.image_id)
            if image is None:
                raise FormatError(f"annotation #{i} references unknown image {ann.image_id}")
            _check_mask_size(ann.mask, image, f"annotation #{i}")
            key = (ann.video_id, ann.image_id, ann.instance_id)
            if key in seen:
                raise FormatError(
                    f"annotation #{i}: duplicate instance {ann.instance_id} "
                    f"on image {ann.image_id} (video {ann.video_id})"
                )
            seen.add(key)
        self.annotations = anns

    def __len__(self) -> int:
        return len(self.annotations)

    def __getitem__(self, index):
        return self.annotations[index]


# --- compressed counts string codec (COCO-compatible LEB128-style, 6 bits/char) ---


def counts_to_string(counts: Sequence[int]) -> str:
    """Encode integer run lengths as the compact ASCII string used in COCO files."""
    chars = []
    counts = list(counts)
    for i, count in enumerate(counts):
        x = int(count)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            chars.append(chr(c + 48))
    return "".join(chars)


def string_to_counts(s: str) -> list[int]:
    """Decode the compact ASCII counts string back to integer run lengths."""
    counts: list[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if p >= len(s):
                raise FormatError("truncated RLE counts string")
            c = ord(s[p]) - 48
            if not 0 <= c < 64:
                raise FormatError(f"invalid character {s[p]!r} in RLE counts string")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[len(counts) - 2]
        counts.append(x)
    return counts


def _parse_segmentation(seg, where: str) -> RleMask:
    if not isinstance(seg, Mapping) or "size" not in seg or "counts" not in seg:
        raise FormatError(f"{where}: segmentation must be {{size: [h, w], counts: ...}}")
    size = seg["size"]
    if not (isinstance(size, Sequence) and len(size) == 2):
        raise FormatError(f"{where}: segmentation size must be [height, width]")
    h, w = int(size[0]), int(size[1])
    raw = seg["counts"]
    if isinstance(raw, str):
        counts = string_to_counts(raw)
    elif isinstance(raw, Sequence):
        counts = [int(c) for c in raw]
    else:
        raise FormatError(f"{where}: counts must be a string or an integer array")
    try:
        return RleMask(h, w, tuple(counts))
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def _dump_segmentation(mask: RleMask) -> dict:
    return {"size": [mask.height, mask.width], "counts": counts_to_string(mask.counts)}


def _parse_bbox(raw, where: str) -> BBox:
    if not (isinstance(raw, Sequence) and len(raw) == 4):
        raise FormatError(f"{where}: bbox must be [x, y, w, h]")
    try:
        return BBox(float(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from exc


def _parse_images(raw, where: str) -> list[ImageInfo]:
    if not isinstance(raw, Sequence):
        raise FormatError(f"{where}: images must be an array")
    images = []
    for i, rec in enumerate(raw):
        try:
            images.append(ImageInfo(int(rec["id"]), int(rec["width"]), int(rec["height"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{where}: image #{i}: {exc}") from exc
    return images


def _parse_videos(raw, where: str) -> list[VideoInfo]:
    videos = []
    for i, rec in enumerate(raw):
        try:
            videos.append(VideoInfo(int(rec["id"]), tuple(rec["frame_ids"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{where}: video #{i}: {exc}") from exc
    return videos


def _frame_index(videos: Mapping[int, VideoInfo]) -> dict[int, int]:
    index = {}
    for video in videos.values():
        for pos, image_id in enumerate(video.frame_ids):
            index[image_id] = pos
    return index


def _load_annotations(doc, path: str) -> GtSet:
    images = _parse_images(doc.get("images", []), path)
    videos = _parse_videos(doc.get("videos", []), path)
    anns = []
    for i, rec in enumerate(doc.get("annotations", [])):
        ann_id = rec.get("id")
        where = f"{path}: annotation #{i}" + (f" (id={ann_id})" if ann_id is not None else "")
        try:
            bbox = _parse_bbox(rec["bbox"], where)
            mask = _parse_segmentation(rec["segmentation"], where) if rec.get("segmentation") else None
            instance_id = rec.get("instance_id", ann_id if ann_id is not None else i + 1)
            anns.append(
                GtAnnotation(
                    image_id=int(rec["image_id"]),
                    instance_id=int(instance_id),
                    bbox=bbox,
                    category_id=int(rec.get("category_id", 1)),
                    mask=mask,
                    video_id=int(rec["video_id"]) if rec.get("video_id") is not None else None,
                    ann_id=int(ann_id) if ann_id is not None else None,
                )
            )
        except FormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{where}: {exc}") from exc
    try:
        return GtSet(anns, images, videos)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _load_results(doc, path: str, images, videos) -> DetectionSet:
    if isinstance(doc, Mapping):
        images = _parse_images(doc["images"], path) if "images" in doc else images
        videos = _parse_videos(doc.get("videos", []), path) or videos
        records = doc.get("results", [])
    else:
        records = doc
    if images is None:
        raise FormatError(
            f"{path}: bare result arrays need an image table; pass images= or use the "
            "self-contained {{images, videos, results}} form"
        )
    image_index = _index_images(images)
    video_index = videos if isinstance(videos, Mapping) else {v.id: v for v in videos or ()}
    frame_of = _frame_index(video_index)
    dets = []
    for i, rec in enumerate(records):
        where = f"{path}: result #{i}"
        try:
            image_id = int(rec["image_id"])
            bbox = _parse_bbox(rec["bbox"], where)
            mask = _parse_segmentation(rec["segmentation"], where) if rec.get("segmentation") else None
            embedding = rec.get("embedding")
            frame_id = int(rec.get("frame_id", frame_of.get(image_id, 0)))
            dets.append(
                Detection(
                    frame_id=frame_id,
                    image_id=image_id,
                    bbox=bbox,
                    score=float(rec["score"]),
                    category_id=int(rec.get("category_id", 1)),
                    mask=mask,
                    embedding=np.asarray(embedding, dtype=float) if embedding is not None else None,
                    track_id=int(rec["track_id"]) if rec.get("track_id") is not None else None,
                )
            )
        except FormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{where}: {exc}") from exc
    try:
        return DetectionSet(dets, image_index, video_index)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def load_coco(path, kind: str, images=None):
    """Load an annotation or result file.

    ``kind="annotations"`` returns a :class:`GtSet`; ``kind="results"`` returns
    a :class:`DetectionSet`.  Bare COCO result arrays (no image table in the
    file) require ``images=``.  Malformed records raise :class:`FormatError`
    naming the offending record.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    if kind == "annotations":
        if not isinstance(doc, Mapping):
            raise FormatError(f"{path}: annotation files must be a JSON object")
        return _load_annotations(doc, str(path))
    if kind == "results":
        videos = None
        if images is not None and hasattr(images, "videos"):
            videos = images.videos
        if hasattr(images, "images"):
            images = images.images
        return _load_results(doc, str(path), images, videos)
    raise ValueError(f"kind must be 'annotations' or 'results', got {kind!r}")


def _image_records(images: Mapping[int, ImageInfo]) -> list[dict]:
    return [
        {"id": img.id, "width": img.width, "height": img.height}
        for img in sorted(images.values(), key=lambda im: im.id)
    ]


def _video_records(videos: Mapping[int, VideoInfo]) -> list[dict]:
    return [
        {"id": v.id, "frame_ids": list(v.frame_ids)}
        for v in sorted(videos.values(), key=lambda v: v.id)
    ]


def _result_record(det: Detection) -> dict:
    rec = {
        "image_id": det.image_id,
        "category_id": det.category_id,
        "bbox": [det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h],
        "score": det.score,
    }
    if det.mask is not None:
        rec["segmentation"] = _dump_segmentation(det.mask)
    if det.embedding is not None:
        rec["embedding"] = det.embedding.tolist()
    if det.track_id is not None:
        rec["track_id"] = det.track_id
    return rec


def _write_json(doc, path) -> None:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    with open(path, "w") as fh:
        fh.write(text)
        fh.write("\n")


def save_results(dset: DetectionSet, path) -> None:
    """Write a self-contained result file; ``load_coco`` round-trips it."""
    doc = {
        "images": _image_records(dset.images),
        "results": [_result_record(d) for d in dset],
    }
    if dset.videos:
        doc["videos"] = _video_records(dset.videos)
    _write_json(doc, path)


def save_annotations(gts: GtSet, path) -> None:
    """Write a ground-truth annotation file readable by ``load_coco``."""
    categories = sorted({ann.category_id for ann in gts})
    records = []
    for i, ann in enumerate(gts):
        rec = {
            "id": ann.ann_id if ann.ann_id is not None else i + 1,
            "image_id": ann.image_id,
            "instance_id": ann.instance_id,
            "category_id": ann.category_id,
            "bbox": [ann.bbox.x, ann.bbox.y, ann.bbox.w, ann.bbox.h],
            "area": ann.bbox.area,
            "iscrowd": 0,
        }
        if ann.mask is not None:
            rec["segmentation"] = _dump_segmentation(ann.mask)
        if ann.video_id is not None:
            rec["video_id"] = ann.video_id
        records.append(rec)
    doc = {
        "images": _image_records(gts.images),
        "annotations": records,
        "categories": [{"id": c, "name": str(c)} for c in categories],
    }
    if gts.videos:
        doc["videos"] = _video_records(gts.videos)
    _write_json(doc, path)


def class_agnostic_merge(records):
    """Replace every ``category_id`` with 1, leaving everything else unchanged.

    Accepts lists of detections or annotations, a :class:`DetectionSet`, or a
    :class:`GtSet`; returns the same kind of collection, order preserved.
    Idempotent.
    """
    if isinstance(records, DetectionSet):
        return records.with_detections(
            dataclasses.replace(d, category_id=1) for d in records
        )
    if isinstance(records, GtSet):
        return GtSet(
            (dataclasses.replace(a, category_id=1) for a in records.annotations),
            records.images,
            records.videos,
        )
    return [dataclasses.replace(r, category_id=1) for r in records]
