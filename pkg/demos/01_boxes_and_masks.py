"""Boxes, run-length masks, and IoU: the primitive layer.

Run with:  python3 demos/01_boxes_and_masks.py
"""

import numpy as np

from trackkit import BBox, box_iou, mask_iou, rle_decode, rle_encode

# Boxes use the COCO (x, y, w, h) convention: top-left corner plus size.
a = BBox(0, 0, 2, 2)
b = BBox(1, 1, 2, 2)
print("IoU of two 2x2 boxes offset by (1,1):", box_iou(a, b))  # 1/7

# Degenerate overlaps are fine; disjoint boxes simply score zero.
print("disjoint:", box_iou(BBox(0, 0, 1, 1), BBox(5, 5, 1, 1)))

# Binary masks are stored run-length encoded over the column-major scan,
# first run counting background pixels.
mask = np.zeros((4, 6), dtype=bool)
mask[1:3, 2:5] = True
rle = rle_encode(mask)
print("mask:")
print(mask.astype(int))
print("runs:", rle.counts, " foreground pixels:", rle.area)

# The codec round-trips exactly.
assert np.array_equal(rle_decode(rle), mask)

# IoU on masks is computed directly on the run intervals, no decoding,
# and agrees exactly with counting pixels on the dense grids.
shifted = np.zeros_like(mask)
shifted[1:3, 3:6] = True
print("mask IoU with a one-column shift:", mask_iou(rle, rle_encode(shifted)))

dense = (np.count_nonzero(mask & shifted) / np.count_nonzero(mask | shifted))
print("same thing counted densely:     ", dense)
