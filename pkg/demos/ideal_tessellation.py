"""The ideal Poisson-Voronoi tessellation of (T_3)^2 and its walls.

Samples the low-intensity limit: a Poisson process of distance-like
functions, each owning the vertices where it is smallest.  Pairs of cells
that touch near the root keep sharing border regions ("walls") far away.

    python3 demos/ideal_tessellation.py
"""

import numpy as np

from treevoronoi.horofunction import horo_eval, level_set_measure
from treevoronoi.ipvt import ideal_tessellation, sample_ipvt, wall
from treevoronoi.tree_graph import TreeParams
from treevoronoi.voronoi import delaunay_adjacency

P = TreeParams(3, 2)

smp = sample_ipvt(P, 8, rng=np.random.SeedSequence(5))
print(f"{len(smp)} functions below cutoff {smp.cutoff}")
tess = ideal_tessellation(smp, 8)
print("cells meeting B_2:", len(tess.cells_meeting(2)), " cells meeting B_8:", len(tess.cells_meeting(8)))

f = smp.function(int(tess.owner_of(P.root)))
print("owner of the root has offset", f.offset, "and value", horo_eval(f, P.root), "there")

# Walls of cells adjacent in B_3, seen in growing balls.
pairs = delaunay_adjacency(tess, radius=3).pairs[:5]
for a, b in pairs:
    sizes = [len(wall(smp, int(a), int(b), 2, L).certified) for L in (4, 6, 8)]
    print(f"pair ({a}, {b}): certified wall size in B_4, B_6, B_8 = {sizes}")

# Exact mass of functions below level m at both the root and v.
v = ((0, 1, 1), (2, 0, 0))
for m in (0, 2, 4):
    print(f"mass of {{f(o) <= {m}, f(v) <= {m}}}:", round(level_set_measure(P, P.root, v, m, 0.5), 6))
