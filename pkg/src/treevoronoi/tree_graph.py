"""Vertices, metric and ball combinatorics of the k-fold product of d-regular trees.

A vertex of the d-regular tree is encoded by its non-backtracking word from the
root: the first letter takes values in ``0..d-1`` and every later letter in
``0..d-2``.  The empty word is the root.  The children of the root are the
words ``(a,)``; the children of a non-root word ``w`` are ``w + (a,)`` with
``a < d - 1``.  A vertex of the product is a tuple of ``k`` such words and the
product carries the L1 (sum) metric.

Large balls are handled by :class:`ProductBall`, an integer-indexed view of
``B_N(center)`` with vectorised neighbour tables.  Its vertex order is the
canonical order used everywhere downstream: increasing distance from the
center, ties broken by comparing the coordinate words lexicographically
(coordinate 0 first).  Because the order is global, the order on ``B_r`` is a
prefix of the order on ``B_N`` for every ``r <= N``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

TreeWord = tuple
Vertex = tuple


@dataclass(frozen=True)
class TreeParams:
    """Degree ``d`` of the tree and number ``k`` of factors."""

    d: int
    k: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise ParameterError(f"degree d must be an integer >= 3, got {self.d!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError(f"k must be an integer >= 1, got {self.k!r}")

    @property
    def root(self) -> Vertex:
        return ((),) * self.k

    @property
    def degree(self) -> int:
        """Degree of every vertex of the product graph."""
        return self.k * self.d

    def check_word(self, word) -> TreeWord:
        word = tuple(int(a) for a in word)
        for pos, a in enumerate(word):
            bound = self.d if pos == 0 else self.d - 1
            if not 0 <= a < bound:
                raise ParameterError(
                    f"letter {a} at position {pos} outside alphabet 0..{bound - 1}"
                )
        return word

    def check_vertex(self, v) -> Vertex:
        if len(v) != self.k:
            raise ParameterError(f"vertex has {len(v)} coordinates, expected k={self.k}")
        return tuple(self.check_word(w) for w in v)


def parse_word(text: str) -> TreeWord:
    """Parse ``"0.1.1"`` (or ``""`` for the root) into a word."""
    text = text.strip()
    if not text:
        return ()
    return tuple(int(a) for a in text.replace("·", ".").split("."))


def lcp_length(a, b) -> int:
    """Length of the longest common prefix of two letter sequences."""
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def tree_distance(a: TreeWord, b: TreeWord) -> int:
    return len(a) + len(b) - 2 * lcp_length(a, b)


def vertex_distance(u: Vertex, v: Vertex) -> int:
    """L1 product distance between two vertices with the same number of coordinates."""
    if len(u) != len(v):
        raise ParameterError(f"vertices have {len(u)} and {len(v)} coordinates")
    return sum(tree_distance(a, b) for a, b in zip(u, v))


def tree_neighbors(word: TreeWord, d: int) -> list:
    """Neighbours of a tree vertex: parent first (if any), then children by letter."""
    if not word:
        return [(a,) for a in range(d)]
    return [word[:-1]] + [word + (a,) for a in range(d - 1)]


def vertex_neighbors(v: Vertex, d: int) -> list:
    """Neighbours of a product vertex, by coordinate then by tree-neighbour order."""
    out = []
    for i, w in enumerate(v):
        for x in tree_neighbors(w, d):
            out.append(v[:i] + (x,) + v[i + 1:])
    return out


# ---------------------------------------------------------------------------
# exact counting


def tree_sphere_size(d: int, q: int) -> int:
    return 1 if q == 0 else d * (d - 1) ** (q - 1)


@functools.lru_cache(maxsize=256)
def _sphere_sizes(d: int, k: int, q: int) -> tuple:
    base = [tree_sphere_size(d, j) for j in range(q + 1)]
    cur = [1] + [0] * q
    for _ in range(k):
        cur = [sum(cur[j] * base[i - j] for j in range(i + 1)) for i in range(q + 1)]
    return tuple(cur)


def sphere_size(params: TreeParams, q: int) -> int:
    """Exact number of vertices at distance ``q`` from the root.

    Computed as the sum over compositions ``q_1 + ... + q_k = q`` of the
    product of tree sphere sizes, with Python integers (no wraparound).
    """
    if q < 0:
        raise ParameterError(f"q must be nonnegative, got {q}")
    return _sphere_sizes(params.d, params.k, int(q))[q]


def ball_size(params: TreeParams, R: int) -> int:
    if R < 0:
        raise ParameterError(f"R must be nonnegative, got {R}")
    return sum(_sphere_sizes(params.d, params.k, int(R)))


def threshold_radius(params: TreeParams, lam: float) -> int:
    """Largest ``t >= 0`` with ``ball_size(t) <= 1/lam``."""
    if not 0 < lam <= 1:
        raise ParameterError(f"lambda must lie in (0, 1], got {lam!r}")
    t = 0
    # exact comparison |B| * lam <= 1 avoids rounding 1/lam
    while ball_size(params, t + 1) * lam <= 1:
        t += 1
    return t


# ---------------------------------------------------------------------------
# indexed balls


class TreeBall:
    """The ball ``B_N(o)`` of the d-regular tree as flat arrays.

    Tree ids are assigned in (depth, lexicographic word) order.  ``nbr[t, s]``
    lists the neighbours of ``t`` with slot 0 the parent (for the root, the
    slots are its ``d`` children) and ``-1`` for vertices outside the ball.
    ``preorder`` is the rank of each word in plain lexicographic order.
    """

    def __init__(self, d: int, N: int):
        self.d, self.N = d, N
        starts = [0, 1]
        for q in range(1, N + 1):
            starts.append(starts[-1] + tree_sphere_size(d, q))
        n = starts[-1]
        self.starts = np.asarray(starts, dtype=np.int64)
        self.n = n
        depth = np.zeros(n, dtype=np.int16)
        parent = np.full(n, -1, dtype=np.int32)
        letter = np.full(n, -1, dtype=np.int8)
        child = np.full((n, d), -1, dtype=np.int32)
        letters = np.full((n, max(N, 1)), -1, dtype=np.int8)
        for q in range(1, N + 1):
            lo, hi = starts[q - 1], starts[q]
            nkids = d if q == 1 else d - 1
            par = np.repeat(np.arange(lo, hi, dtype=np.int32), nkids)
            let = np.tile(np.arange(nkids, dtype=np.int8), hi - lo)
            ids = np.arange(starts[q], starts[q + 1], dtype=np.int32)
            depth[ids] = q
            parent[ids] = par
            letter[ids] = let
            child[par, let] = ids
            letters[ids] = letters[par]
            letters[ids, q - 1] = let
        self.depth, self.parent, self.letter = depth, parent, letter
        self.child, self.letters = child, letters

        nbr = np.full((n, d), -1, dtype=np.int32)
        nbr[0] = child[0]
        nbr[1:, 0] = parent[1:]
        nbr[1:, 1:] = child[1:, : d - 1]
        self.nbr = nbr

        # subtree sizes depend only on depth; preorder rank of a child
        sub = np.zeros(N + 2, dtype=np.int64)
        for q in range(N, 0, -1):
            sub[q] = 1 + (d - 1) * sub[q + 1]
        pre = np.zeros(n, dtype=np.int64)
        for q in range(1, N + 1):
            ids = np.arange(starts[q], starts[q + 1])
            pre[ids] = pre[parent[ids]] + 1 + letter[ids].astype(np.int64) * sub[q]
        self.preorder = pre

    def word(self, t: int) -> TreeWord:
        return tuple(int(a) for a in self.letters[t, : self.depth[t]])

    @functools.cached_property
    def words(self) -> list:
        """Word of every tree id, as a list of tuples."""
        rows = self.letters.tolist()
        return [tuple(row[:q]) for row, q in zip(rows, self.depth.tolist())]

    def id_of(self, word) -> int:
        t = 0
        for a in word:
            if t < 0:
                break
            t = int(self.child[t, a])
        if t < 0 or len(word) > self.N:
            raise KeyError(word)
        return t

    def ids_along(self, rays: np.ndarray) -> np.ndarray:
        """Tree ids of the prefixes of each ray.

        ``rays`` has shape ``(n, depth)``; the result has shape ``(n, depth+1)``
        with column ``j`` the id of the length-``j`` prefix.
        """
        n, depth = rays.shape
        out = np.zeros((n, depth + 1), dtype=np.int32)
        for j in range(depth):
            out[:, j + 1] = self.child[out[:, j], rays[:, j]]
        return out


@functools.lru_cache(maxsize=8)
def tree_ball(d: int, N: int) -> TreeBall:
    return TreeBall(d, N)


def _reroot_words(tb: TreeBall, center: TreeWord) -> list:
    """Absolute words of the relative ball vertices under a fixed automorphism
    sending the root to ``center``.

    Neighbours of a relative vertex are matched, in order, with the neighbours
    of its image other than the image of its relative parent.
    """
    d = tb.d
    out = [None] * tb.n
    out[0] = tuple(center)
    for t in range(1, tb.n):
        p = int(tb.parent[t])
        a = int(tb.letter[t])
        cur = out[p]
        if p == 0:
            out[t] = tree_neighbors(cur, d)[a]
        else:
            prev = out[int(tb.parent[p])]
            cands = [y for y in tree_neighbors(cur, d) if y != prev]
            out[t] = cands[a]
    return out


class ProductBall:
    """Integer-indexed ball ``B_N(center)`` of ``(T_d)^k`` in canonical order.

    Attributes
    ----------
    coords : (V, k) int32
        Relative tree ids (ids in :class:`TreeBall` of radius ``N``) per coordinate.
    dist : (V,) int16
        Distance to the center.
    offsets : (N + 2,) int64
        ``offsets[r]`` is the number of vertices at distance ``< r``, so the
        ball ``B_r`` is the index range ``[0, offsets[r + 1])``.
    """

    def __init__(self, params: TreeParams, N: int, center: Vertex | None = None):
        if N < 0:
            raise ParameterError(f"radius must be nonnegative, got {N}")
        self.params = params
        self.N = N
        d, k = params.d, params.k
        center = params.root if center is None else params.check_vertex(center)
        self.center = center
        tb = tree_ball(d, N)
        self.tree = tb
        self._abs_words = []
        self._abs_index = []
        lex = []
        for c in center:
            if c:
                words = _reroot_words(tb, c)
                order = sorted(range(tb.n), key=words.__getitem__)
                rank = np.empty(tb.n, dtype=np.int64)
                rank[order] = np.arange(tb.n)
                lex.append(rank)
                self._abs_words.append(words)
                self._abs_index.append({w: t for t, w in enumerate(words)})
            else:
                lex.append(tb.preorder)
                self._abs_words.append(None)
                self._abs_index.append(None)

        blocks = []
        for comp in itertools.product(range(N + 1), repeat=k):
            if sum(comp) > N:
                continue
            ranges = [np.arange(tb.starts[a], tb.starts[a + 1], dtype=np.int32) for a in comp]
            grid = np.meshgrid(*ranges, indexing="ij")
            blocks.append(np.stack([g.ravel() for g in grid], axis=1))
        coords = np.concatenate(blocks, axis=0)
        dist = tb.depth[coords].sum(axis=1).astype(np.int16)
        keys_for_sort = [lex[i][coords[:, i]] for i in reversed(range(k))]
        order = np.lexsort(keys_for_sort + [dist])
        self.coords = np.ascontiguousarray(coords[order])
        self.dist = dist[order]
        self.size = len(self.dist)
        self.offsets = np.searchsorted(self.dist, np.arange(N + 2), side="left").astype(np.int64)
        if float(tb.n) ** k >= 2.0 ** 62:
            raise ParameterError("ball too large for integer vertex keys")
        self._radix = np.array([tb.n ** (k - 1 - i) for i in range(k)], dtype=np.int64)
        keys = self.coords.astype(np.int64) @ self._radix
        self._key_order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._key_order]
        self._nbr = None

    # -- lookups -----------------------------------------------------------

    def ball_count(self, r: int) -> int:
        """Number of vertices in ``B_r(center)`` (a prefix of the index range)."""
        r = min(int(r), self.N)
        return int(self.offsets[r + 1]) if r >= 0 else 0

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Indices of rows of relative tree ids; ``-1`` where outside the ball."""
        coords = np.asarray(coords)
        bad = (coords < 0).any(axis=1)
        keys = np.where(bad[:, None], 0, coords).astype(np.int64) @ self._radix
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.minimum(pos, len(self._sorted_keys) - 1)
        hit = (self._sorted_keys[pos] == keys) & ~bad
        return np.where(hit, self._key_order[pos], -1).astype(np.int64)

    def vertex(self, i: int) -> Vertex:
        out = []
        for c in range(self.params.k):
            t = int(self.coords[i, c])
            words = self._abs_words[c]
            out.append(words[t] if words is not None else self.tree.word(t))
        return tuple(out)

    def vertices(self, count: int | None = None) -> list:
        count = self.size if count is None else count
        tables = [w if w is not None else self.tree.words for w in self._abs_words]
        cols = [
            [tables[c][t] for t in self.coords[:count, c].tolist()]
            for c in range(self.params.k)
        ]
        return list(zip(*cols))

    def index_of(self, v: Vertex) -> int:
        v = self.params.check_vertex(v)
        ids = []
        for c, w in enumerate(v):
            table = self._abs_index[c]
            try:
                ids.append(table[w] if table is not None else self.tree.id_of(w))
            except KeyError:
                return -1
        return int(self.lookup(np.asarray([ids]))[0])

    # -- graph structure ---------------------------------------------------

    @property
    def neighbors(self) -> np.ndarray:
        """``(V, k*d)`` neighbour table, ``-1`` outside the ball.

        Columns are grouped by coordinate; within a coordinate slot 0 moves
        toward the center and the remaining slots move away by letter.
        """
        if self._nbr is None:
            d, k = self.params.d, self.params.k
            tb = self.tree
            nbr = np.full((self.size, k * d), -1, dtype=np.int32)
            for i in range(k):
                col = self.coords[:, i]
                for s in range(d):
                    t = tb.nbr[col, s]
                    new = self.coords.copy()
                    new[:, i] = t
                    ok = t >= 0
                    step = np.where(tb.depth[np.maximum(t, 0)] > tb.depth[col], 1, -1)
                    ok &= (self.dist + step) <= self.N
                    idx = np.full(self.size, -1, dtype=np.int64)
                    idx[ok] = self.lookup(new[ok])
                    nbr[:, i * d + s] = idx
            self._nbr = nbr
        return self._nbr

    def edges(self, r: int | None = None) -> tuple:
        """Edges with both endpoints in ``B_r``, as index arrays ``(a, b)`` with
        ``a < b``, sorted by ``(a, b)``."""
        r = self.N if r is None else r
        n = self.ball_count(r)
        nb = self.neighbors[:n]
        a = np.repeat(np.arange(n, dtype=np.int64), nb.shape[1])
        b = nb.ravel().astype(np.int64)
        keep = (b > a) & (b < n)
        a, b = a[keep], b[keep]
        order = np.lexsort((b, a))
        return a[order], b[order]


@functools.lru_cache(maxsize=6)
def _cached_ball(params: TreeParams, N: int, center: Vertex) -> ProductBall:
    return ProductBall(params, N, center)


def product_ball(params: TreeParams, N: int, center: Vertex | None = None) -> ProductBall:
    """Cached :class:`ProductBall`; instances are shared and must not be mutated."""
    center = params.root if center is None else params.check_vertex(center)
    return _cached_ball(params, int(N), center)


def ball_enumerate(params: TreeParams, R: int) -> list:
    """All vertices of ``B_R(o)`` sorted by (distance, lexicographic words)."""
    return product_ball(params, R).vertices()
