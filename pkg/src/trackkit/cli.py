"""Command-line pipeline: simulate, filter, track, eval, and report.

Stages communicate through COCO-style JSON files (schemas in
``docs/format.md``); identical flags and inputs always produce identical
bytes.  Exit codes: 0 success, 1 usage error, 2 data/format error.  Defaults
can be overridden by a ``key = value`` config file; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

from .assoc import GATE_CHI2_95_4DOF
from .detset import (
    FormatError,
    load_coco,
    save_annotations,
    save_results,
)
from .evaluation import (
    DEFAULT_IOU_THRESHOLDS,
    EvalConfig,
    EvalResult,
    ar_at_k,
    report,
    track_ar,
    tracks_from_detections,
)
from .filters import FilterPolicy, nms, pseudo_label
from .kalman import STD_WEIGHT_POSITION, STD_WEIGHT_VELOCITY
from .sim import SequenceSpec, simulate
from .tracker import Tracker, TrackerConfig, count_id_switches

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt_default(default) -> str:
    if default is None:
        return "unset"
    return str(default)


# knob tables: name -> (type, default, help); names use underscores, flags dashes
_SIMULATE_KNOBS = {
    "seed": (int, None, "RNG seed (required)"),
    "objects": (int, 5, "number of ground-truth objects"),
    "frames": (int, 100, "number of frames"),
    "width": (int, 1000, "image width in pixels"),
    "height": (int, 1000, "image height in pixels"),
    "velocity_min": (float, 0.5, "minimum speed, px/frame"),
    "velocity_max": (float, 3.0, "maximum speed, px/frame"),
    "size_min": (float, 32.0, "minimum box side, px"),
    "size_max": (float, 72.0, "maximum box side, px"),
    "jitter": (float, 0.0, "detection position jitter sigma, px"),
    "score_noise": (float, 0.0, "detection score noise sigma"),
    "drop_rate": (float, 0.0, "per-detection drop probability"),
    "clutter_rate": (float, 0.0, "expected false detections per frame"),
    "embedding_noise": (float, 0.0, "embedding perturbation sigma"),
    "embedding_dim": (int, 16, "embedding dimensionality"),
    "min_separation": (float, 0.0, "minimum pairwise box gap, px"),
    "turn_rate": (float, 0.0, "velocity rotation per frame, radians"),
    "masks": (bool, False, "synthesize filled-box masks"),
    "video_id": (int, 1, "video id of the generated sequence"),
}

_FILTER_KNOBS = {
    "policy": (("topk", "threshold"), None, "filter policy (required)"),
    "k": (int, 15, "keep the k highest-score detections per image"),
    "tau": (float, None, "confidence threshold (required for threshold policy)"),
    "nms_iou": (float, None, "apply NMS at this IoU before filtering"),
}

_TRACK_KNOBS = {
    "score_thresh": (float, 0.0, "drop detections below this score"),
    "nms_iou": (float, 0.7, "NMS IoU threshold applied per frame"),
    "policy": (("topk", "threshold"), None, "extra pre-association filter"),
    "k": (int, 15, "k for the extra topk pre-filter"),
    "tau": (float, None, "tau for the extra threshold pre-filter"),
    "n_init": (int, 3, "consecutive hits to confirm a track"),
    "max_age": (int, 30, "missed frames before a confirmed track dies"),
    "gallery_budget": (int, 100, "embeddings kept per track"),
    "lambda": (float, 0.0, "motion/appearance blend (0 = appearance only)"),
    "gate_chi2": (float, GATE_CHI2_95_4DOF, "Mahalanobis gate"),
    "max_appearance": (float, 0.4, "appearance distance gate"),
    "max_iou_cost": (float, 0.7, "IoU-cost gate (1 - IoU)"),
    "kalman_pos_weight": (float, STD_WEIGHT_POSITION, "position noise weight (std = w*h)"),
    "kalman_vel_weight": (float, STD_WEIGHT_VELOCITY, "velocity noise weight (std = w*h)"),
    "jobs": (int, 1, "videos tracked in parallel"),
}

_EVAL_KNOBS = {
    "level": (("frame", "track"), "frame", "evaluate per-frame boxes or whole tracks"),
    "iou_kind": (("box", "mask"), "box", "IoU on boxes or masks"),
    "max_dets": (int, 100, "top predictions kept per image (or tracks per video)"),
    "iou_thresholds": (
        str,
        ",".join(f"{t:.2f}" for t in DEFAULT_IOU_THRESHOLDS),
        "comma-separated IoU thresholds",
    ),
    "class_agnostic": (bool, True, "collapse all categories before matching"),
    "label": (str, "pred", "row label in the report"),
    "csv": (bool, False, "machine-parseable CSV output"),
    "jobs": (int, 1, "images evaluated in parallel"),
}

_REPORT_KNOBS = {
    "csv": (bool, False, "machine-parseable CSV output"),
}


def _add_knobs(sub: argparse.ArgumentParser, knobs: dict) -> None:
    for name, (typ, default, help_text) in knobs.items():
        flag = "--" + name.replace("_", "-")
        text = f"{help_text} (default: {_fmt_default(default)})"
        if typ is bool:
            sub.add_argument(flag, action=argparse.BooleanOptionalAction, default=None, help=text)
        elif isinstance(typ, tuple):
            sub.add_argument(flag, choices=typ, default=None, help=text)
        else:
            sub.add_argument(flag, type=typ, default=None, help=text)
    sub.add_argument("--config", default=None, help="key = value file overriding defaults")
    sub.add_argument(
        "--print-config",
        action="store_true",
        help="print the fully resolved configuration and exit",
    )


def _convert(raw: str, typ, key: str):
    if typ is bool:
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise _UsageError(f"config key {key}: expected true/false, got {raw!r}")
    if isinstance(typ, tuple):
        if raw not in typ:
            raise _UsageError(f"config key {key}: expected one of {typ}, got {raw!r}")
        return raw
    try:
        return typ(raw)
    except ValueError as exc:
        raise _UsageError(f"config key {key}: {exc}") from exc


def _read_config(path: str, knobs: dict) -> dict:
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise _UsageError(f"cannot read config file: {exc}") from exc
    for number, line in enumerate(lines, 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise _UsageError(f"{path}:{number}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in knobs:
            raise _UsageError(f"{path}:{number}: unknown key {key!r}")
        values[key] = _convert(raw.strip(), knobs[key][0], key)
    return values


def _resolve(args: argparse.Namespace, knobs: dict) -> dict:
    resolved = {name: default for name, (_t, default, _h) in knobs.items()}
    if args.config:
        resolved.update(_read_config(args.config, knobs))
    for name in knobs:
        value = vars(args).get(name)
        if value is not None:
            resolved[name] = value
    return resolved


def _print_config(resolved: dict) -> int:
    for key in sorted(resolved):
        value = resolved[key]
        print(f"{key} = {'unset' if value is None else value}")
    return 0


def _make_policy(resolved: dict) -> FilterPolicy | None:
    kind = resolved["policy"]
    if kind is None:
        return None
    try:
        if kind == "topk":
            return FilterPolicy.topk(resolved["k"])
        if resolved["tau"] is None:
            raise _UsageError("threshold policy needs --tau")
        return FilterPolicy.threshold(resolved["tau"])
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc


def _cmd_simulate(args) -> int:
    resolved = _resolve(args, _SIMULATE_KNOBS)
    if args.print_config:
        return _print_config(resolved)
    if resolved["seed"] is None:
        raise _UsageError("simulate needs --seed")
    try:
        spec = SequenceSpec(
            n_objects=resolved["objects"],
            n_frames=resolved["frames"],
            rng_seed=resolved["seed"],
            image_width=resolved["width"],
            image_height=resolved["height"],
            velocity_min=resolved["velocity_min"],
            velocity_max=resolved["velocity_max"],
            size_min=resolved["size_min"],
            size_max=resolved["size_max"],
            jitter_sigma=resolved["jitter"],
            score_noise_sigma=resolved["score_noise"],
            drop_rate=resolved["drop_rate"],
            clutter_rate=resolved["clutter_rate"],
            embedding_noise_sigma=resolved["embedding_noise"],
            embedding_dim=resolved["embedding_dim"],
            min_separation=resolved["min_separation"],
            turn_rate=resolved["turn_rate"],
            include_masks=resolved["masks"],
            video_id=resolved["video_id"],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    gts, dets = simulate(spec)
    save_annotations(gts, args.gt_out)
    save_results(dets, args.det_out)
    return 0


def _cmd_filter(args) -> int:
    resolved = _resolve(args, _FILTER_KNOBS)
    if args.print_config:
        return _print_config(resolved)
    if resolved["policy"] is None:
        raise _UsageError("filter needs --policy")
    policy = _make_policy(resolved)
    dset = load_coco(args.input, "results")
    kept = []
    for image_id in sorted(dset.images):
        dets = list(dset.by_image(image_id))
        if not dets:
            continue
        if resolved["nms_iou"] is not None:
            dets = nms(dets, resolved["nms_iou"])
        kept.extend(pseudo_label(dets, policy))
    save_results(dset.with_detections(kept), args.output)
    return 0


def _cmd_track(args) -> int:
    resolved = _resolve(args, _TRACK_KNOBS)
    if args.print_config:
        return _print_config(resolved)
    try:
        config = TrackerConfig(
            score_thresh=resolved["score_thresh"],
            nms_iou=resolved["nms_iou"],
            policy=_make_policy(resolved),
            n_init=resolved["n_init"],
            max_age=resolved["max_age"],
            gallery_budget=resolved["gallery_budget"],
            lam=resolved["lambda"],
            gate_chi2=resolved["gate_chi2"],
            max_appearance=resolved["max_appearance"],
            max_iou_cost=resolved["max_iou_cost"],
            kalman_pos_weight=resolved["kalman_pos_weight"],
            kalman_vel_weight=resolved["kalman_vel_weight"],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    dset = load_coco(args.input, "results")

    def run_one(video_id):
        frames = (
            list(dset.videos[video_id].frame_ids) if video_id is not None else dset.image_ids
        )
        tracker = Tracker(config)
        out = []
        for index, image_id in enumerate(frames):
            out.extend(det for _tid, det in tracker.step(index, dset.by_image(image_id)))
        return out

    video_ids = sorted(dset.videos) if dset.videos else [None]
    jobs = max(1, resolved["jobs"])
    if jobs > 1 and len(video_ids) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_one, video_ids))
    else:
        chunks = [run_one(v) for v in video_ids]
    stamped = [det for chunk in chunks for det in chunk]
    stamped.sort(key=lambda d: (d.image_id, d.track_id))
    save_results(dset.with_detections(stamped), args.output)
    return 0


def _parse_thresholds(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise _UsageError(f"bad --iou-thresholds: {exc}") from exc


def _cmd_eval(args) -> int:
    resolved = _resolve(args, _EVAL_KNOBS)
    if args.print_config:
        return _print_config(resolved)
    try:
        cfg = EvalConfig(
            max_dets=resolved["max_dets"],
            iou_thresholds=_parse_thresholds(resolved["iou_thresholds"]),
            iou_kind=resolved["iou_kind"],
            class_agnostic=resolved["class_agnostic"],
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    gts = load_coco(args.gt, "annotations")
    preds = load_coco(args.pred, "results", images=gts)
    switches = None
    if resolved["level"] == "track":
        pred_tracks = tracks_from_detections(preds)
        result = track_ar(pred_tracks, gts, cfg)
        switches = count_id_switches(pred_tracks, list(gts))
    else:
        result = ar_at_k(preds, gts, cfg, jobs=max(1, resolved["jobs"]))
    text = report([(resolved["label"], result)], csv=resolved["csv"])
    sys.stdout.write(text)
    if switches is not None:
        if resolved["csv"]:
            sys.stdout.write(f"identity_switches,{switches}\n")
        else:
            sys.stdout.write(f"identity switches: {switches}\n")
    if args.json_out:
        doc = {
            "label": resolved["label"],
            "level": resolved["level"],
            "max_dets": cfg.max_dets,
            "ar": result.ar,
            "recall_per_threshold": [[t, r] for t, r in result.recall_per_threshold],
        }
        if switches is not None:
            doc["identity_switches"] = switches
        with open(args.json_out, "w") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    return 0


def _cmd_report(args) -> int:
    resolved = _resolve(args, _REPORT_KNOBS)
    if args.print_config:
        return _print_config(resolved)
    rows = []
    for path in args.results:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc
        try:
            result = EvalResult(
                ar=float(doc["ar"]),
                recall_per_threshold=tuple(
                    (float(t), float(r)) for t, r in doc["recall_per_threshold"]
                ),
                max_dets=int(doc.get("max_dets", 100)),
            )
            rows.append((str(doc.get("label", path)), result))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: not an eval result file: {exc}") from exc
    sys.stdout.write(report(rows, csv=resolved["csv"]))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="trackkit", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="generate a synthetic GT + detection pair")
    sim.add_argument("--gt-out", required=True, help="output annotation file")
    sim.add_argument("--det-out", required=True, help="output detection result file")
    _add_knobs(sim, _SIMULATE_KNOBS)
    sim.set_defaults(func=_cmd_simulate)

    flt = subs.add_parser("filter", help="apply topk/threshold (and optional NMS) per image")
    flt.add_argument("input", help="input result file")
    flt.add_argument("output", help="output result file")
    _add_knobs(flt, _FILTER_KNOBS)
    flt.set_defaults(func=_cmd_filter)

    trk = subs.add_parser("track", help="run the tracker over a detection result file")
    trk.add_argument("input", help="input result file")
    trk.add_argument("output", help="output result file with track_id per record")
    _add_knobs(trk, _TRACK_KNOBS)
    trk.set_defaults(func=_cmd_track)

    evl = subs.add_parser("eval", help="average recall of predictions against ground truth")
    evl.add_argument("--gt", required=True, help="ground-truth annotation file")
    evl.add_argument("--pred", required=True, help="prediction result file")
    evl.add_argument("--json-out", default=None, help="also write the result as JSON")
    _add_knobs(evl, _EVAL_KNOBS)
    evl.set_defaults(func=_cmd_eval)

    rep = subs.add_parser("report", help="combine eval JSON outputs into one table")
    rep.add_argument("results", nargs="+", help="eval --json-out files")
    _add_knobs(rep, _REPORT_KNOBS)
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else int(exc.code)


if __name__ == "__main__":
    sys.exit(main())
