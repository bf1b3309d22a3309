"""Bernoulli-Voronoi tessellations on finite windows of (T_d)^k.

A window is a ball ``B_{R+M}(center)``.  Nuclei are drawn by independent
Bernoulli trials over the window vertices in canonical order, each nucleus
carrying a uniform label.  Every vertex is owned by the nucleus minimising
(distance, label), computed by a multi-source breadth-first search.

Certification: if every vertex of ``B_r`` has a sampled nucleus within
distance ``M``, no nucleus outside the window (at distance ``> M`` from
every such vertex) can own or tie for it, so ownership on ``B_r`` coincides
with the infinite-volume diagram built from the same Bernoulli draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationError, EmptyTessellationError, ParameterError
from .rng import as_seed_sequence, child_sequence, generator
from .tree_graph import ProductBall, TreeParams, Vertex, ball_size, product_ball

_FAR = np.iinfo(np.int32).max
_COLLISION_TAG = 0xC011


@dataclass(frozen=True)
class Window:
    """The ball ``B_{R+M}(center)``; ``R`` is the region of interest, ``M`` the margin."""

    params: TreeParams
    center: Vertex
    R: int
    M: int

    def __post_init__(self):
        if self.R < 0 or self.M < 0:
            raise ParameterError(f"R and M must be nonnegative, got R={self.R}, M={self.M}")

    @classmethod
    def at_root(cls, params: TreeParams, R: int, M: int = 0) -> "Window":
        return cls(params, params.root, R, M)

    @property
    def radius(self) -> int:
        return self.R + self.M

    @property
    def ball(self) -> ProductBall:
        return product_ball(self.params, self.radius, self.center)


@dataclass(frozen=True)
class LabeledNucleus:
    vertex: Vertex
    label: float


@dataclass
class NucleusSample:
    """Nuclei of a window as window indices (canonical order) and labels."""

    window: Window
    index: np.ndarray
    label: np.ndarray
    collisions: int = 0

    def __len__(self):
        return len(self.index)

    def as_list(self) -> list:
        ball = self.window.ball
        return [LabeledNucleus(ball.vertex(int(i)), float(y)) for i, y in zip(self.index, self.label)]


def _resolve_collisions(labels: np.ndarray, seq: np.random.SeedSequence) -> int:
    """Redraw later copies of repeated labels in place; return how many were redrawn."""
    redrawn = 0
    rng = None
    while True:
        _, first = np.unique(labels, return_index=True)
        if len(first) == len(labels):
            return redrawn
        dup = np.setdiff1d(np.arange(len(labels)), first)
        if rng is None:
            rng = generator(child_sequence(seq, _COLLISION_TAG))
        labels[dup] = rng.random(len(dup))
        redrawn += len(dup)


def sample_bernoulli_nuclei(window: Window, lam: float, stream) -> NucleusSample:
    """Keep each window vertex independently with probability ``lam``.

    Two uniforms are consumed per vertex in canonical order (inclusion, then
    label), so the sample on a smaller concentric window is a prefix of the
    sample on a larger one drawn from the same stream.
    """
    if not 0 < lam <= 1:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    seq = as_seed_sequence(stream)
    n = window.ball.size
    draws = generator(seq).random((n, 2))
    index = np.flatnonzero(draws[:, 0] < lam)
    labels = draws[index, 1].copy()
    collisions = _resolve_collisions(labels, seq)
    return NucleusSample(window, index, labels, collisions)


def lexicographic_bfs(nbr: np.ndarray, n: int, seed_idx, seed_val, seed_rank) -> tuple:
    """Multi-source search minimising ``(value, rank)`` lexicographically.

    Sources enter with integer values; every edge adds 1 to the value and
    keeps the rank.  Returns ``(value, rank)`` arrays of length ``n`` with the
    lexicographic minimum over sources of ``(seed_val + dist, seed_rank)``.
    Neighbour entries ``< 0`` or ``>= n`` are ignored.
    """
    seed_idx = np.asarray(seed_idx, dtype=np.int64)
    seed_val = np.asarray(seed_val, dtype=np.int64)
    seed_rank = np.asarray(seed_rank, dtype=np.int64)
    value = np.full(n, _FAR, dtype=np.int64)
    rank = np.full(n, _FAR, dtype=np.int64)
    if len(seed_idx) == 0:
        return value, rank
    order = np.argsort(seed_val, kind="stable")
    seed_idx, seed_val, seed_rank = seed_idx[order], seed_val[order], seed_rank[order]
    bounds = np.flatnonzero(np.diff(seed_val)) + 1
    groups = np.split(np.arange(len(seed_val)), bounds)
    group_vals = [int(seed_val[g[0]]) for g in groups]

    pending = np.full(n, _FAR, dtype=np.int64)
    touched = np.zeros(n, dtype=bool)
    frontier = np.empty(0, dtype=np.int64)
    x = group_vals[0]
    gi = 0
    remaining = n
    while remaining:
        if frontier.size:
            nb = nbr[frontier].astype(np.int64)
            src = np.broadcast_to(rank[frontier][:, None], nb.shape)
            ok = (nb >= 0) & (nb < n)
            nb, src = nb[ok], src[ok]
            fresh = value[nb] == _FAR
            nb, src = nb[fresh], src[fresh]
            np.minimum.at(pending, nb, src)
            touched[nb] = True
        if gi < len(groups) and group_vals[gi] == x:
            g = groups[gi]
            gi += 1
            s_idx, s_rank = seed_idx[g], seed_rank[g]
            fresh = value[s_idx] == _FAR
            np.minimum.at(pending, s_idx[fresh], s_rank[fresh])
            touched[s_idx[fresh]] = True
        new = np.flatnonzero(touched)
        if new.size == 0:
            if gi >= len(groups):
                break
            x = group_vals[gi]
            frontier = new
            continue
        value[new] = x
        rank[new] = pending[new]
        pending[new] = _FAR
        touched[new] = False
        remaining -= new.size
        frontier = new
        x += 1
    return value, rank


@dataclass
class Tessellation:
    """Ownership of every window vertex.

    ``owner[v]`` is a cell id (an index into ``nuclei``); ``value[v]`` is the
    distance to the owning nucleus (finite mode) or the ideal function value
    (ideal mode).  ``certified[v]`` marks vertices whose ownership provably
    agrees with the infinite model; it holds on all of
    ``B_{certified_radius}(center)`` and usually somewhat beyond.
    """

    window: Window
    nuclei: object
    owner: np.ndarray
    value: np.ndarray
    cell_labels: np.ndarray
    certified_radius: int
    certified: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.certified is None:
            self.certified = np.zeros(len(self.owner), dtype=bool)
            self.certified[: self.count(self.certified_radius)] = True

    @property
    def ball(self) -> ProductBall:
        return self.window.ball

    @property
    def size(self) -> int:
        return len(self.owner)

    @property
    def num_cells(self) -> int:
        return len(self.cell_labels)

    def count(self, r: int) -> int:
        """Number of window vertices in ``B_r(center)``."""
        return self.ball.ball_count(r)

    def cells_meeting(self, r: int) -> np.ndarray:
        return np.unique(self.owner[: self.count(r)])

    def owner_of(self, v: Vertex) -> int:
        i = self.ball.index_of(v)
        if i < 0 or i >= self.size:
            raise ParameterError(f"{v} is outside the window")
        return int(self.owner[i])


def _ranks(labels: np.ndarray) -> tuple:
    order = np.argsort(labels, kind="stable")
    rank = np.empty(len(labels), dtype=np.int64)
    rank[order] = np.arange(len(labels))
    return rank, order


def build_tessellation(nuclei: NucleusSample, window: Window | None = None) -> Tessellation:
    """Assign each window vertex to the nucleus minimising (distance, label)."""
    window = nuclei.window if window is None else window
    if len(nuclei) == 0:
        raise EmptyTessellationError("no nuclei in the window")
    labels = np.asarray(nuclei.label, dtype=np.float64)
    if len(np.unique(labels)) != len(labels):
        raise ParameterError("nucleus labels must be pairwise distinct")
    ball = window.ball
    n = ball.size
    rank, by_rank = _ranks(labels)
    value, best = lexicographic_bfs(
        ball.neighbors, n, nuclei.index, np.zeros(len(nuclei), dtype=np.int64), rank
    )
    owner = by_rank[best].astype(np.int32)
    # a nucleus outside the window is farther than radius - |v| from v
    certified = value <= window.radius - ball.dist[:n]
    bad = np.flatnonzero(value > window.M)
    if bad.size:
        certified_r = min(window.R, int(ball.dist[bad[0]]) - 1)
    else:
        certified_r = window.R
    return Tessellation(window, nuclei, owner, value, labels, certified_r, certified)


def initial_margin(params: TreeParams, R: int, lam: float, miss: float = 1e-3) -> int:
    """Smallest margin (at least 4) making an uncovered vertex in ``B_R`` unlikely.

    Uses the union bound ``|B_R| (1 - lam)^{|B_M|} <= miss``.
    """
    if lam >= 1:
        return 4
    need = math.log(ball_size(params, R) / miss) / -math.log1p(-lam)
    M = 1
    while ball_size(params, M) < need:
        M += 1
    return max(4, M)


def certified_window_tessellation(
    params: TreeParams,
    center: Vertex | None,
    R: int,
    lam: float,
    stream,
    margin: int | None = None,
    max_margin: int | None = None,
    max_vertices: int = 30_000_000,
) -> Tessellation:
    """Tessellation whose ownership on ``B_R(center)`` is that of the infinite model.

    The margin starts at :func:`initial_margin` (or ``margin``) and doubles,
    redrawing from the same stream so earlier draws are reused, until the
    certified radius reaches ``R``.
    """
    if not 0 < lam <= 1:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    center = params.root if center is None else params.check_vertex(center)
    seq = as_seed_sequence(stream)
    M = initial_margin(params, R, lam) if margin is None else margin
    cap = R + 512 if max_margin is None else max_margin
    achieved = -1
    while True:
        if M > cap or ball_size(params, R + M) > max_vertices:
            raise CertificationError(
                f"margin {M} exceeds the cap before certifying radius {R}", achieved
            )
        window = Window(params, center, R, M)
        nuclei = sample_bernoulli_nuclei(window, lam, seq)
        if len(nuclei):
            tess = build_tessellation(nuclei, window)
            achieved = tess.certified_radius
            if achieved >= R:
                tess.meta["margin"] = M
                return tess
        M *= 2


# ---------------------------------------------------------------------------
# derived structures


@dataclass
class DelaunayAdjacency:
    """Pairs of distinct cells owning the two ends of some window edge.

    ``pairs`` is sorted lexicographically with ``pairs[:, 0] < pairs[:, 1]``;
    ``both_certified[i]`` says whether both cells of pair ``i`` meet the
    certified ball.
    """

    pairs: np.ndarray
    both_certified: np.ndarray

    def as_set(self) -> set:
        return {(int(a), int(b)) for a, b in self.pairs}

    def __len__(self):
        return len(self.pairs)


def delaunay_adjacency(
    tess: Tessellation, radius: int | None = None, certified_only: bool = False
) -> DelaunayAdjacency:
    """Cell adjacency witnessed by edges of ``B_radius`` (default: the whole window).

    With ``certified_only`` an edge counts only if both ends have certified
    ownership, so every reported pair is adjacent in the infinite model.
    """
    a, b = tess.ball.edges(tess.window.radius if radius is None else radius)
    if certified_only:
        keep = tess.certified[a] & tess.certified[b]
        a, b = a[keep], b[keep]
    oa, ob = tess.owner[a], tess.owner[b]
    cut = oa != ob
    lo = np.minimum(oa[cut], ob[cut]).astype(np.int64)
    hi = np.maximum(oa[cut], ob[cut]).astype(np.int64)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if lo.size else np.empty((0, 2), np.int64)
    inside = np.zeros(tess.num_cells, dtype=bool)
    inside[tess.cells_meeting(tess.certified_radius)] = True
    both = inside[pairs[:, 0]] & inside[pairs[:, 1]] if len(pairs) else np.empty(0, bool)
    return DelaunayAdjacency(pairs, both)


@dataclass
class BondEncoding:
    """One bit per edge of ``B_radius``: 1 iff both ends lie in the same cell.

    Edges are in canonical order, sorted by (smaller endpoint, larger
    endpoint) in canonical vertex order.  :meth:`hex` packs the bits
    most-significant first, padding the last byte with zeros.
    """

    radius: int
    edges: tuple
    bits: np.ndarray

    def hex(self) -> str:
        return np.packbits(self.bits.astype(np.uint8)).tobytes().hex()

    def code(self) -> int:
        """The bits read as a binary integer, first edge most significant."""
        out = 0
        for bit in self.bits.tolist():
            out = (out << 1) | int(bit)
        return out

    @staticmethod
    def bits_from_hex(text: str, num_edges: int) -> np.ndarray:
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        return np.unpackbits(raw)[:num_edges]


def bond_encoding(tess: Tessellation, sub_radius: int) -> BondEncoding:
    if sub_radius > tess.certified_radius:
        raise CertificationError(
            f"sub_radius {sub_radius} exceeds certified radius {tess.certified_radius}",
            tess.certified_radius,
        )
    a, b = tess.ball.edges(sub_radius)
    bits = (tess.owner[a] == tess.owner[b]).astype(np.uint8)
    return BondEncoding(sub_radius, (a, b), bits)
