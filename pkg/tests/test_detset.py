import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackkit.detset import (
    Detection,
    DetectionSet,
    FormatError,
    GtAnnotation,
    GtSet,
    ImageInfo,
    VideoInfo,
    class_agnostic_merge,
    counts_to_string,
    load_coco,
    save_annotations,
    save_results,
    string_to_counts,
)
from trackkit.geometry import BBox, RleMask, rle_encode


def write_json(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestCountsString:
    # hand-derived vectors for the 6-bit LEB128-style codec (chars 48..111,
    # deltas against the run two places back from the fourth run on)
    @pytest.mark.parametrize(
        "counts,encoded",
        [
            ([4], "4"),
            ([0, 4], "04"),
            ([1, 2, 1], "121"),
            ([2, 3, 4, 5], "2342"),  # last run stored as 5 - 3
            ([5, 3, 1, 1], "531N"),  # negative delta 1 - 3 = -2
        ],
    )
    def test_golden_vectors(self, counts, encoded):
        assert counts_to_string(counts) == encoded
        assert string_to_counts(encoded) == counts

    @given(st.integers(1, 48), st.integers(1, 48), st.integers(0, 2**32 - 1))
    @settings(max_examples=200)
    def test_round_trip(self, h, w, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((h, w)) < rng.random()
        counts = list(rle_encode(mask).counts)
        assert string_to_counts(counts_to_string(counts)) == counts

    def test_rejects_bad_characters(self):
        with pytest.raises(FormatError):
            string_to_counts("\x07")


def make_detection(image_id=1, score=0.9, **kwargs):
    defaults = dict(frame_id=0, image_id=image_id, bbox=BBox(1, 1, 2, 2), score=score)
    defaults.update(kwargs)
    return Detection(**defaults)


class TestDetectionModel:
    def test_score_out_of_range(self):
        with pytest.raises(ValueError):
            make_detection(score=1.5)

    def test_embedding_must_be_unit_norm(self):
        with pytest.raises(ValueError):
            make_detection(embedding=np.array([1.0, 1.0]))

    def test_unit_embedding_accepted(self):
        det = make_detection(embedding=np.array([0.6, 0.8]))
        assert det.embedding is not None

    def test_unknown_image_rejected(self):
        with pytest.raises(FormatError):
            DetectionSet([make_detection(image_id=7)], [ImageInfo(1, 10, 10)])

    def test_mask_size_checked(self):
        mask = rle_encode(np.ones((4, 4), dtype=bool))
        with pytest.raises(FormatError):
            DetectionSet([make_detection(mask=mask)], [ImageInfo(1, 10, 10)])


class TestLoadAnnotations:
    def test_minimal_file(self, tmp_path):
        path = write_json(
            tmp_path,
            "gt.json",
            {"images": [{"id": 1, "width": 8, "height": 6}], "annotations": []},
        )
        gts = load_coco(path, "annotations")
        assert len(gts) == 0
        assert gts.images[1].width == 8

    def test_field_mapping(self, tmp_path):
        path = write_json(
            tmp_path,
            "gt.json",
            {
                "images": [{"id": 1, "width": 8, "height": 6}],
                "annotations": [
                    {
                        "id": 11,
                        "image_id": 1,
                        "category_id": 3,
                        "bbox": [1, 1, 2, 2],
                        "instance_id": 5,
                        "video_id": 2,
                    }
                ],
                "videos": [{"id": 2, "frame_ids": [1]}],
            },
        )
        gts = load_coco(path, "annotations")
        ann = gts[0]
        assert ann.bbox == BBox(1, 1, 2, 2)
        assert ann.instance_id == 5
        assert ann.video_id == 2
        assert gts.videos[2].frame_ids == (1,)

    def test_bad_counts_sum_names_annotation(self, tmp_path):
        path = write_json(
            tmp_path,
            "gt.json",
            {
                "images": [{"id": 1, "width": 2, "height": 2}],
                "annotations": [
                    {
                        "id": 99,
                        "image_id": 1,
                        "bbox": [0, 0, 1, 1],
                        "segmentation": {"size": [2, 2], "counts": [1, 2]},
                    }
                ],
            },
        )
        with pytest.raises(FormatError, match="id=99"):
            load_coco(path, "annotations")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            load_coco(path, "annotations")

    def test_unknown_image_reference(self, tmp_path):
        path = write_json(
            tmp_path,
            "gt.json",
            {
                "images": [{"id": 1, "width": 4, "height": 4}],
                "annotations": [{"id": 1, "image_id": 9, "bbox": [0, 0, 1, 1]}],
            },
        )
        with pytest.raises(FormatError):
            load_coco(path, "annotations")

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100)
    def test_fuzzed_bad_masks_always_rejected(self, tmp_path_factory, seed):
        # every loaded mask must satisfy the RLE invariants, whatever the file says
        rng = np.random.default_rng(seed)
        h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        variant = int(rng.integers(3))
        if variant == 0:  # sum mismatch
            counts = [h * w + int(rng.integers(1, 5))]
        elif variant == 1:  # negative run
            counts = [-1, h * w + 1]
        else:  # adjacent zero runs
            counts = [0, 0, h * w]
        doc = {
            "images": [{"id": 1, "width": w, "height": h}],
            "annotations": [
                {
                    "id": 5,
                    "image_id": 1,
                    "bbox": [0, 0, 1, 1],
                    "segmentation": {"size": [h, w], "counts": counts},
                }
            ],
        }
        path = tmp_path_factory.mktemp("fuzz") / "gt.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="id=5"):
            load_coco(path, "annotations")


class TestLoadResults:
    def test_record_mapping(self, tmp_path):
        path = write_json(
            tmp_path,
            "res.json",
            {
                "images": [{"id": 1, "width": 8, "height": 6}],
                "results": [{"image_id": 1, "bbox": [1, 1, 2, 2], "score": 0.9}],
            },
        )
        dets = load_coco(path, "results")
        (det,) = list(dets)
        assert det.bbox == BBox(1, 1, 2, 2)
        assert det.score == 0.9
        assert det.category_id == 1

    def test_bare_array_needs_images(self, tmp_path):
        path = write_json(
            tmp_path, "res.json", [{"image_id": 1, "bbox": [0, 0, 1, 1], "score": 0.5}]
        )
        with pytest.raises(FormatError):
            load_coco(path, "results")
        dets = load_coco(path, "results", images=[ImageInfo(1, 4, 4)])
        assert len(dets) == 1

    def test_frame_id_from_video_table(self, tmp_path):
        path = write_json(
            tmp_path,
            "res.json",
            {
                "images": [{"id": 10, "width": 4, "height": 4}, {"id": 11, "width": 4, "height": 4}],
                "videos": [{"id": 1, "frame_ids": [10, 11]}],
                "results": [{"image_id": 11, "bbox": [0, 0, 1, 1], "score": 0.5}],
            },
        )
        dets = load_coco(path, "results")
        (det,) = list(dets)
        assert det.frame_id == 1


def random_set(seed, n=100, with_masks=True):
    rng = np.random.default_rng(seed)
    images = [ImageInfo(i + 1, 32, 24) for i in range(4)]
    dets = []
    for _ in range(n):
        image = images[int(rng.integers(len(images)))]
        x = float(rng.uniform(0, 20))
        y = float(rng.uniform(0, 16))
        w = float(rng.uniform(1, 10))
        h = float(rng.uniform(1, 7))
        mask = None
        if with_masks and rng.random() < 0.5:
            mask = rle_encode(rng.random((image.height, image.width)) < 0.3)
        embedding = None
        if rng.random() < 0.5:
            v = rng.normal(size=8)
            embedding = v / np.linalg.norm(v)
        dets.append(
            Detection(
                frame_id=0,
                image_id=image.id,
                bbox=BBox(x, y, w, h),
                score=float(rng.uniform(0, 1)),
                category_id=int(rng.integers(1, 5)),
                mask=mask,
                embedding=embedding,
                track_id=int(rng.integers(1, 9)) if rng.random() < 0.3 else None,
            )
        )
    return DetectionSet(dets, images)


class TestSaveResults:
    def test_empty_set(self, tmp_path):
        path = tmp_path / "out.json"
        save_results(DetectionSet([], [ImageInfo(1, 4, 4)]), path)
        doc = json.loads(path.read_text())
        assert doc["results"] == []
        reloaded = load_coco(path, "results")
        assert len(reloaded) == 0

    def test_round_trip_random_set(self, tmp_path):
        original = random_set(7)
        path = tmp_path / "out.json"
        save_results(original, path)
        reloaded = load_coco(path, "results")
        assert len(reloaded) == len(original)
        for a, b in zip(original, reloaded):
            assert abs(a.score - b.score) <= 1e-6
            for name in ("x", "y", "w", "h"):
                assert abs(getattr(a.bbox, name) - getattr(b.bbox, name)) <= 1e-6
            assert a.category_id == b.category_id
            assert a.track_id == b.track_id
            if a.embedding is None:
                assert b.embedding is None
            else:
                assert np.allclose(a.embedding, b.embedding, atol=1e-6)

    def test_masks_reencoded_identically(self, tmp_path):
        original = random_set(11)
        path = tmp_path / "out.json"
        save_results(original, path)
        reloaded = load_coco(path, "results")
        for a, b in zip(original, reloaded):
            assert (a.mask is None) == (b.mask is None)
            if a.mask is not None:
                assert a.mask.counts == b.mask.counts

    def test_save_is_deterministic(self, tmp_path):
        original = random_set(3)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_results(original, p1)
        save_results(original, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestSaveAnnotations:
    def test_round_trip(self, tmp_path):
        images = [ImageInfo(1, 16, 16), ImageInfo(2, 16, 16)]
        videos = [VideoInfo(1, (1, 2))]
        anns = [
            GtAnnotation(1, 1, BBox(0, 0, 4, 4), 2, rle_encode(np.ones((16, 16), bool)), 1, 1),
            GtAnnotation(2, 1, BBox(1, 0, 4, 4), 2, None, 1, 2),
        ]
        gts = GtSet(anns, images, videos)
        path = tmp_path / "gt.json"
        save_annotations(gts, path)
        reloaded = load_coco(path, "annotations")
        assert len(reloaded) == 2
        assert reloaded[0].mask.counts == anns[0].mask.counts
        assert reloaded.videos[1].frame_ids == (1, 2)
        assert reloaded[1].instance_id == 1
        assert reloaded[1].video_id == 1


class TestClassAgnosticMerge:
    def test_all_categories_collapse(self):
        anns = [
            GtAnnotation(1, i + 1, BBox(0, 0, 1, 1), category_id=c)
            for i, c in enumerate([1, 20, 45, 80, 81])
        ]
        merged = class_agnostic_merge(anns)
        assert [a.category_id for a in merged] == [1] * 5
        assert [a.instance_id for a in merged] == [1, 2, 3, 4, 5]

    def test_empty(self):
        assert class_agnostic_merge([]) == []

    def test_idempotent_and_length_preserving(self):
        dets = [make_detection(category_id=c) for c in (3, 1, 2)]
        once = class_agnostic_merge(dets)
        twice = class_agnostic_merge(once)
        assert once == twice
        assert len(once) == len(dets)

    def test_detection_set_preserved(self):
        dset = random_set(5, n=20, with_masks=False)
        merged = class_agnostic_merge(dset)
        assert isinstance(merged, DetectionSet)
        assert len(merged) == len(dset)
        assert all(d.category_id == 1 for d in merged)
        # untouched fields survive
        for a, b in zip(dset, merged):
            assert a.bbox == b.bbox and a.score == b.score
