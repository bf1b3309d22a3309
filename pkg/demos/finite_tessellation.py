"""Bernoulli-Voronoi percolation on (T_3)^2, one sample at a time.

Walks through the finite-intensity pipeline: sample nuclei, build the
certified tessellation, look at the cells around the root, color them and
evaluate the percolation events.

    python3 demos/finite_tessellation.py
"""

import numpy as np

from treevoronoi.percolation import cluster_frequency_srw, color_and_cluster, local_uniqueness_event, two_point_event
from treevoronoi.tree_graph import TreeParams, ball_size, sphere_size, threshold_radius
from treevoronoi.voronoi import bond_encoding, certified_window_tessellation, delaunay_adjacency

P = TreeParams(3, 2)

# Balls grow exponentially, so a small intensity still leaves few cells nearby.
print("sphere sizes:", [sphere_size(P, q) for q in range(7)])
for lam in (0.3, 0.1, 0.03, 0.003):
    print(f"lambda={lam}: t_lambda={threshold_radius(P, lam)}, |B_t|={ball_size(P, threshold_radius(P, lam))}")

# A tessellation certified on B_3: the window margin doubles until every
# vertex of B_3 has a provably correct owner.
tess = certified_window_tessellation(P, None, 3, 0.1, np.random.SeedSequence(2024))
print(f"\nwindow radius {tess.window.radius}, {tess.num_cells} nuclei, certified radius {tess.certified_radius}")
print("cells meeting B_3:", len(tess.cells_meeting(3)))
adj = delaunay_adjacency(tess, radius=3)
print("Delaunay pairs seen from B_3:", len(adj))
print("bond code on B_1:", bond_encoding(tess, 1).hex())

# Color each cell black with probability p and cluster the black cells.
for p in (0.5, 0.8):
    ct = color_and_cluster(tess, p, rng=7)
    u, v = P.root, ((0, 1), (2,))
    print(f"\np={p}: {ct.num_clusters} black clusters")
    print("  local uniqueness A(R=1):", local_uniqueness_event(ct, 1))
    print(f"  root <-> {v}:", two_point_event(ct, u, v))
    freq = cluster_frequency_srw(ct, P.root, 20_000, rng=1)
    top = sorted(freq.items(), key=lambda kv: -kv[1])[:3]
    print("  walk time spent in the largest clusters:", [(c, round(float(f), 3)) for c, f in top])
