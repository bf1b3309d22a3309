"""Cell percolation on a tessellation: coloring, clusters, local events.

Only vertices with certified ownership are used.  Two black certified
vertices are in the same cluster when an edge between certified black
vertices joins their cells or when they share a cell (cells are
connected).  A cluster is *closed* when every neighbour of its certified
vertices is itself certified; a closed cluster is a whole cluster of the
infinite configuration, while an open one may merge with others outside
the certified region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParameterError
from .rng import generator
from .tree_graph import Vertex
from .voronoi import Tessellation


@dataclass
class ColoredTessellation:
    """A tessellation with black cells and their clusters.

    Attributes
    ----------
    marks : (num_cells,) float
        One uniform per cell; the cell is black iff its mark is below ``p``.
    black : (num_cells,) bool
        Cell colors.
    cluster_of : (n,) int
        Cluster id of each window vertex, ``-1`` if white or uncertified.
        Clusters are numbered in order of their first vertex.
    closed : (num_clusters,) bool
        Whether the cluster is known to be a whole cluster.
    """

    base: Tessellation
    p: float
    marks: np.ndarray
    black: np.ndarray
    cluster_of: np.ndarray
    closed: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def radius(self) -> int:
        return self.base.certified_radius

    @property
    def num_clusters(self) -> int:
        return len(self.closed)

    @property
    def black_cells(self) -> set:
        return set(np.flatnonzero(self.black).tolist())

    def _index(self, v) -> int:
        i = v if isinstance(v, (int, np.integer)) else self.base.ball.index_of(v)
        if not 0 <= i < len(self.cluster_of) or not self.base.certified[i]:
            raise ParameterError(f"{v} has no certified owner")
        return int(i)

    def connected(self, u, v) -> bool:
        """Whether ``u`` and ``v`` are black and in the same cluster."""
        a, b = self.cluster_of[self._index(u)], self.cluster_of[self._index(v)]
        return bool(a >= 0 and a == b)


def color_and_cluster(tess: Tessellation, p: float, rng=None, marks=None) -> ColoredTessellation:
    """Color every cell black with probability ``p`` and find black clusters.

    Pass the same ``rng`` seed (or the same ``marks``) for several ``p`` to
    get the monotone coupling.
    """
    if not 0 <= p <= 1:
        raise ParameterError(f"p must lie in [0, 1], got {p!r}")
    if marks is None:
        marks = generator(rng).random(tess.num_cells)
    black = marks < p
    ball = tess.ball
    n = tess.size
    known = tess.certified
    bv = known & black[tess.owner]
    a, b = ball.edges(tess.window.radius)
    keep = bv[a] & bv[b]
    ca, cb = tess.owner[a[keep]], tess.owner[b[keep]]
    m = tess.num_cells
    graph = coo_matrix((np.ones(len(ca), dtype=np.int8), (ca, cb)), shape=(m, m))
    _, comp = connected_components(graph, directed=False)
    vcomp = np.where(bv, comp[tess.owner], -1)
    # renumber by first vertex so ids do not depend on scipy internals
    used, first = np.unique(vcomp[bv], return_index=True)
    remap = np.full(m, -1, dtype=np.int64)
    remap[used[np.argsort(np.flatnonzero(bv)[first])]] = np.arange(len(used))
    cluster_of = np.where(bv, remap[np.maximum(vcomp, 0)], -1)
    nbr = ball.neighbors
    leaky = bv & ((nbr < 0) | ~known[np.maximum(nbr, 0)]).any(axis=1)
    closed = np.ones(len(used), dtype=bool)
    closed[cluster_of[leaky]] = False
    return ColoredTessellation(tess, p, marks, black, cluster_of, closed)


def local_uniqueness_event(ct: ColoredTessellation, R: int, center: Vertex | None = None):
    """The event that black meets ``B_R`` and all black of ``B_{3R}`` is one cluster.

    Returns ``True``, ``False`` or ``None`` (undecided).  Several black
    pieces of ``B_{3R}`` in different open clusters may join outside the
    certified region, so the answer is ``None`` unless one of the pieces
    belongs to a closed cluster.
    """
    tess = ct.base
    if center is not None and tuple(center) != tuple(tess.window.center):
        raise ParameterError("the event is evaluated at the window center")
    if 3 * R > ct.radius:
        return None
    inner = ct.cluster_of[: tess.count(R)]
    if not (inner >= 0).any():
        return False
    pieces = np.unique(ct.cluster_of[: tess.count(3 * R)])
    pieces = pieces[pieces >= 0]
    if len(pieces) == 1:
        return True
    if ct.closed[pieces].any():
        return False
    return None


def two_point_event(ct: ColoredTessellation, u, v):
    """``u <-> v`` with the same undecided rule as :func:`local_uniqueness_event`."""
    a, b = ct.cluster_of[ct._index(u)], ct.cluster_of[ct._index(v)]
    if a < 0 or b < 0:
        return False
    if a == b:
        return True
    if ct.closed[a] or ct.closed[b]:
        return False
    return None


def cluster_frequency_srw(ct: ColoredTessellation, start, steps: int, rng=None) -> dict:
    """Fraction of ``steps`` a simple random walk spends in each black cluster.

    The walk lives on the certified ball; a step toward a vertex outside it
    is replaced by staying put, which keeps the uniform measure stationary.
    """
    tess = ct.base
    n = tess.count(tess.certified_radius)
    i = ct._index(start)
    nbr = tess.ball.neighbors[:n]
    deg = nbr.shape[1]
    choice = generator(rng).integers(0, deg, size=steps)
    visits = np.zeros(ct.num_clusters + 1, dtype=np.int64)
    table = nbr.tolist()
    cl = ct.cluster_of.tolist()
    for s in choice.tolist():
        j = table[i][s]
        if 0 <= j < n:
            i = j
        visits[cl[i]] += 1
    out = {}
    for c in np.flatnonzero(visits[:-1]):
        out[int(c)] = visits[c] / steps
    return out
