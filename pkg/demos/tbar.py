"""Clustered T-bar: member force, cluster length and stiffness against pulley diameter.

Run with ``python3 demos/tbar.py``.
"""

import numpy as np

from pulleytens.analysis import radius_sweep, stiffness_spectrum
from pulleytens.io import load_deck
from pulleytens.statics import evaluate_statics

deck = load_deck("tbar")
model = deck.model
table = radius_sweep(model, deck.sweep_pulleys, deck.sweep_radii, deck.schedule, deck.config)

print("diameter [cm]   cluster force [N]   cluster length [m]   lambda_1 [N/m]   lambda_1/lambda_2")
for row in table.rows:
    rec = row.result.substeps[-1]
    # the spectrum needs the topology of this row, since the radius changes the wraps
    m = model
    for nid, att in deck.sweep_pulleys:
        m = m.with_radius(nid, att, row.radius)
    st = evaluate_statics(rec.n, m.topology, m.load_vector(rec.loads), m.gravity, rec.rest_length)
    spec = stiffness_spectrum(st.K_Taa, 2)
    print(f"{200 * row.radius:13.0f} {rec.t_c[2]:19.1f} {rec.l_C[2]:20.4f}"
          f" {spec.minimal:16.1f} {spec.ratio:19.4%}")

d_mm = np.array([2e3 * row.radius for row in table.rows])
force = np.array([row.result.substeps[-1].t_c[2] for row in table.rows])
print("force slope [N/mm]:", np.round(np.diff(force) / np.diff(d_mm), 1))
