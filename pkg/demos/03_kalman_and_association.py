"""The constant-velocity Kalman filter and Hungarian data association.

Run with:  python3 demos/03_kalman_and_association.py
"""

import numpy as np

from trackkit import BBox, from_state, hungarian, initiate, predict, to_measurement, update
from trackkit.assoc import INFEASIBLE
from trackkit.kalman import gating_distance

# Track a box moving right at 3 px/frame.  The filter state is
# (cx, cy, aspect, height) plus velocities; measurements are boxes.
truth = [BBox(10 + 3 * f, 40, 16, 32) for f in range(12)]

state = initiate(to_measurement(truth[0]))
print("frame  predicted-cx  corrected-cx  true-cx  gate-distance")
for f, box in enumerate(truth[1:], start=1):
    state = predict(state)
    measured = to_measurement(box)
    d2 = gating_distance(state, measured)
    state = update(state, measured)
    print(f"{f:5d}  {from_state(state).x + 8:12.2f}  {state.mean[0]:12.2f}"
          f"  {box.x + 8:7.1f}  {d2:12.4f}")

# After a few frames the velocity estimate locks on and the gate distance
# collapses toward zero: the filter has learned the motion.

# Association: a cost matrix with an infeasible cell.  The solver returns
# the minimum-total-cost assignment over the finite cells, maximum
# cardinality first, ties broken lexicographically.
cost = np.array(
    [
        [0.1, 0.9, INFEASIBLE],
        [0.9, 0.2, 0.8],
        [INFEASIBLE, 0.7, 0.3],
    ]
)
assignment = hungarian(cost)
print("matches:", assignment.matches, " total:", assignment.total_cost(cost))
print("unmatched rows:", assignment.unmatched_rows, " cols:", assignment.unmatched_cols)
