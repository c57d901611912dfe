"""Robotic finger: tip travel while one cable is pulled and the other stays slack.

Run with ``python3 demos/finger.py``.
"""

from pulleytens.analysis import radius_sweep
from pulleytens.io import load_deck
from pulleytens.solver import stepped_solve

deck = load_deck("finger")
model = deck.model
k7 = model.topology.node_index[7]

res = stepped_solve(model, deck.schedule, deck.config)
print("substep   tip X [m]   tip Y [m]   cable forces [N]")
for rec in res.substeps:
    x, y = rec.positions[k7, :2]
    print(f"{rec.index:7d} {x:11.4f} {y:11.4f}   {rec.t_c[-2]:.2f}, {rec.t_c[-1]:.2f}")

# larger joint pulleys give the cables more lever arm on the phalanges
table = radius_sweep(model, deck.sweep_pulleys, deck.sweep_radii, deck.schedule, deck.config)
print("\nradius [m]   final tip X [m]   relaxed cable length [m]")
for row in table.rows:
    rec = row.result.substeps[-1]
    print(f"{row.radius:10.3f} {rec.positions[k7, 0]:17.4f} {rec.l_C[-1]:26.4f}")
