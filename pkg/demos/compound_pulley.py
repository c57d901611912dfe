"""Compound pulley: how the lower pulley radius moves the load and the wrap arcs.

Run with ``python3 demos/compound_pulley.py``.
"""

import numpy as np

from pulleytens.analysis import radius_sweep
from pulleytens.io import load_deck

deck = load_deck("compound_pulley")
model = deck.model
k2 = model.topology.node_index[2]

# sweep the radius of the pulley carried by node 2, reusing the deck schedule
radii = [0.005, 0.015, 0.025, 0.035]
table = radius_sweep(model, [(2, 1)], radii, deck.schedule, deck.config)

print("radius [mm]   l_s1 [mm]   Y2 [mm]   phi_C first junction [rad]")
for row in table.rows:
    rec = row.result.substeps[-1]
    print(f"{row.radius * 1e3:11.1f} {rec.l_S[0] * 1e3:11.2f} {rec.positions[k2, 1] * 1e3:9.2f}"
          f" {rec.phi_C[0]:12.4f}")

# every +10 mm of radius shortens the first segment and lifts node 2 by 10 to 15 mm
l_s = np.array([[rec.l_S[0] for rec in row.result.substeps] for row in table.rows])
y2 = np.array([[rec.positions[k2, 1] for rec in row.result.substeps] for row in table.rows])
print("per +10 mm radius, change of l_s1 [mm]:", np.round(np.diff(l_s, axis=0)[:, -1] * 1e3, 2))
print("per +10 mm radius, change of Y2 [mm]:  ", np.round(np.diff(y2, axis=0)[:, -1] * 1e3, 2))
