"""Synthetic sequences through the tracker: clean versus degraded input.

Run with:  python3 demos/04_simulate_and_track.py
"""

from trackkit import SequenceSpec, TrackerConfig, count_id_switches, run_sequence, simulate

BASE = dict(
    n_objects=4,
    n_frames=80,
    min_separation=120.0,
    size_min=40.0,
    size_max=72.0,
)

# The simulator is fully deterministic for a given spec: same seed, same
# bytes.  Objects move at constant velocity inside the image; detections
# derive from ground truth by jitter, drops, and Poisson clutter.
for label, extra in (
    ("noiseless", {}),
    ("jitter 2px", dict(jitter_sigma=2.0)),
    ("30% drops", dict(jitter_sigma=2.0, drop_rate=0.3)),
    ("plus clutter", dict(jitter_sigma=2.0, drop_rate=0.3, clutter_rate=2.0)),
):
    switches = 0
    tracks_total = 0
    for seed in range(5):
        gts, dets = simulate(SequenceSpec(rng_seed=seed, **BASE, **extra))
        tracks = run_sequence(TrackerConfig(max_age=5), dets)
        tracks_total += len(tracks)
        switches += count_id_switches(tracks, list(gts))
    print(f"{label:13s}  tracks/run: {tracks_total / 5:4.1f}   "
          f"identity switches over 5 seeds: {switches}")

# On clean, well-separated input the tracker recovers exactly one track per
# object with zero identity switches; fragmentation and switches appear as
# the detection stream degrades.
