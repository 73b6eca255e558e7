"""Pseudo-label filtering (topK / threshold / NMS) and the EMA teacher rule.

Run with:  python3 demos/02_pseudo_label_filters.py
"""

import numpy as np

from trackkit import BBox, Detection, FilterPolicy, ema_update, nms, pseudo_label

rng = np.random.default_rng(0)

# A frame's worth of raw detector output: 30 scored boxes, some stacked on
# top of each other the way dense detector heads produce them.
dets = []
for i in range(30):
    cx, cy = rng.uniform(0, 200, size=2)
    for _ in range(int(rng.integers(1, 3))):
        dets.append(
            Detection(
                frame_id=0,
                image_id=1,
                bbox=BBox(cx + rng.normal(0, 2), cy + rng.normal(0, 2), 24, 24),
                score=float(rng.uniform(0, 1)),
            )
        )
print("raw detections:", len(dets))

# Greedy hard NMS first: survivors are pairwise below the IoU threshold.
survivors = nms(dets, 0.6)
print("after NMS @0.6:", len(survivors))

# Two ways to cut low-quality candidates: a confidence threshold, or keep
# the topK by score.  Both are exposed through one policy object.
for policy in (FilterPolicy.threshold(0.5), FilterPolicy.topk(15)):
    kept = pseudo_label(survivors, policy)
    print(f"policy {policy.kind:9s} -> {len(kept):2d} pseudo-labels "
          f"(lowest kept score {min(d.score for d in kept):.3f})")

# The teacher parameters trail the student through an exponential moving
# average; with momentum m the gap shrinks by a factor m per step.
teacher = np.zeros(4)
student = np.ones(4)
for step in range(1, 6):
    teacher = ema_update(teacher, student, momentum=0.9)
    print(f"step {step}: teacher[0] = {teacher[0]:.5f} (gap {1 - teacher[0]:.5f})")
