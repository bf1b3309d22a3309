"""Distance-like functions on (T_d)^k: horofunctions, harmonic ends, shifts.

A distance-like function is ``h^psi + m`` where ``psi`` is a ``k``-tuple of
directions (a finite vertex or an end of the tree) and ``m`` an integer
offset.  On a single tree, with ``lcp`` the longest common prefix,

    h^c(a)   = dist(a, c) - |c|          for a finite center c,
    h^psi(a) = |a| - 2 * lcp(psi, a)     for an end psi,

and the product function is the coordinate sum.  Both cases are the same
formula once ``c`` is viewed as a (finite) path from the root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisError, ParameterError
from .tree_graph import (
    ProductBall,
    TreeParams,
    TreeWord,
    Vertex,
    lcp_length,
    tree_distance,
    tree_neighbors,
)


def default_theta0(d: int) -> float:
    """Level-0 intensity ``(d-2)/(d-1)`` used when none is given."""
    return (d - 2) / (d - 1)


def level_mass_below(d: int, theta0: float, level: int) -> float:
    """Total mass ``sum_{l <= level} theta0 (d-1)^l = theta0 (d-1)^(level+1) / (d-2)``."""
    return theta0 * float(d - 1) ** (level + 1) / (d - 2)


def letters_from_uniforms(u: np.ndarray, d: int, first: int = 0) -> np.ndarray:
    """Map uniforms to end letters; column ``c`` holds depth ``first + c``.

    Depth 0 takes ``d`` values, every deeper letter ``d - 1`` values.
    """
    u = np.asarray(u, dtype=np.float64)
    alphabet = np.full(u.shape[-1], d - 1, dtype=np.float64)
    if first == 0 and u.shape[-1]:
        alphabet[0] = d
    return np.minimum(np.floor(u * alphabet), alphabet - 1).astype(np.int8)


# ---------------------------------------------------------------------------
# directions


@dataclass(frozen=True)
class Finite:
    """A vertex of the tree used as a direction."""

    center: TreeWord

    def prefix(self, depth: int) -> TreeWord:
        return tuple(self.center[:depth])


class End:
    """An end of the tree, materialised lazily to any depth.

    ``extend(count, n)`` must return ``n`` new letters starting at depth
    ``count``; already materialised letters never change.
    """

    def __init__(self, letters=(), extend=None, d=None):
        self._letters = [int(a) for a in letters]
        self._extend = extend
        self.d = d

    @classmethod
    def eventually_periodic(cls, prefix, cycle, d=None):
        """The end ``prefix + cycle + cycle + ...``."""
        prefix, cycle = list(prefix), list(cycle)
        if not cycle:
            raise ParameterError("cycle must be nonempty")

        def extend(count, n):
            out = []
            for pos in range(count, count + n):
                j = pos - len(prefix)
                out.append(prefix[pos] if j < 0 else cycle[j % len(cycle)])
            return out

        end = cls((), extend, d)
        end._ensure(len(prefix) + len(cycle))
        if d is not None:
            TreeParams(d, 1).check_word(end._letters)
        return end

    @property
    def depth(self) -> int:
        """Number of letters materialised so far."""
        return len(self._letters)

    def _ensure(self, depth: int):
        missing = depth - len(self._letters)
        if missing > 0:
            if self._extend is None:
                raise HypothesisError(
                    f"end materialised to depth {len(self._letters)}, {depth} requested"
                )
            self._letters.extend(int(a) for a in self._extend(len(self._letters), missing))

    def prefix(self, depth: int) -> TreeWord:
        self._ensure(depth)
        return tuple(self._letters[:depth])

    def __repr__(self):
        shown = ".".join(map(str, self._letters[:8]))
        return f"End({shown}...)"


def sample_harmonic_end(params: TreeParams, depth: int, rng: np.random.Generator) -> End:
    """Draw an end from the harmonic measure by a uniform non-backtracking ray.

    The end owns ``rng`` and keeps drawing from it when deepened, one uniform
    per letter, so the letters do not depend on how extension is chunked.
    """
    if depth < 1:
        raise ParameterError(f"depth must be positive, got {depth}")
    d = params.d

    def extend(count, n):
        return letters_from_uniforms(rng.random(n), d, first=count).tolist()

    end = End((), extend, d)
    end._ensure(depth)
    return end


def cylinder_probability(d: int, word: TreeWord) -> float:
    """Harmonic mass of the ends passing through ``word``."""
    if not word:
        return 1.0
    return 1.0 / (d * float(d - 1) ** (len(word) - 1))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class DistanceLikeFunction:
    """``h^psi + offset`` with an optional tie-break label."""

    directions: tuple
    offset: int = 0
    label: float | None = None
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def k(self) -> int:
        return len(self.directions)


def _coordinate_value(direction, word: TreeWord) -> int:
    if isinstance(direction, Finite):
        return tree_distance(word, direction.center) - len(direction.center)
    ray = direction.prefix(len(word))
    return len(word) - 2 * lcp_length(ray, word)


def horo_eval(f: DistanceLikeFunction, v: Vertex) -> int:
    """Value of ``f`` at the vertex ``v``."""
    if len(v) != f.k:
        raise ParameterError(f"vertex has {len(v)} coordinates, function has {f.k}")
    return sum(_coordinate_value(p, w) for p, w in zip(f.directions, v)) + int(f.offset)


def horo_eval_separator(f: DistanceLikeFunction, v: Vertex) -> int:
    """Same value through a separating vertex: ``dist(v_i, r) - dist(o, r)``.

    For ends the separator ``r`` is the ray prefix one deeper than ``v_i``,
    which separates the end from both ``v_i`` and the root.
    """
    total = int(f.offset)
    for p, w in zip(f.directions, v):
        r = p.center if isinstance(p, Finite) else p.prefix(len(w) + 1)
        total += tree_distance(w, r) - len(r)
    return total


def coordinate_values_on_tree(path: TreeWord, tb) -> np.ndarray:
    """``depth(t) - 2 lcp(path, t)`` for every id of a root-centred tree ball.

    ``path`` is a finite center or an end prefix at least as deep as the ball.
    """
    path = tuple(path[: tb.N])
    onpath = np.zeros(tb.n, dtype=bool)
    onpath[tb.ids_along(np.asarray([path], dtype=np.int64).reshape(1, -1))[0]] = True
    lcp = np.zeros(tb.n, dtype=np.int32)
    for q in range(1, tb.N + 1):
        ids = np.arange(tb.starts[q], tb.starts[q + 1])
        lcp[ids] = np.where(onpath[ids], q, lcp[tb.parent[ids]])
    return tb.depth.astype(np.int32) - 2 * lcp


def evaluate_on_ball(f: DistanceLikeFunction, ball: ProductBall, count: int | None = None) -> np.ndarray:
    """Values of ``f`` on the first ``count`` vertices of a root-centred ball."""
    if ball.center != ball.params.root:
        raise ParameterError("vectorised evaluation needs a root-centred ball")
    count = ball.size if count is None else count
    tb = ball.tree
    out = np.full(count, int(f.offset), dtype=np.int64)
    for i, p in enumerate(f.directions):
        path = p.center if isinstance(p, Finite) else p.prefix(tb.N)
        if len(path) > tb.N:
            # a finite center outside the ball: fall back to exact per-id values
            vals = np.array([tree_distance(w, path) - len(path) for w in tb.words])
        else:
            vals = coordinate_values_on_tree(path, tb)
        out += vals[ball.coords[:count, i]]
    return out


# ---------------------------------------------------------------------------
# translations along a bi-infinite geodesic


class LineTranslation:
    """Tree automorphism translating the geodesic ``[psi, phi]`` toward ``phi``.

    Every vertex is described by its projection onto the line (an integer
    position, 0 at the branch point) and the path from the projection,
    encoded by neighbour indices.  The translation shifts the position and
    keeps the path code, which is an automorphism because every line vertex
    has the same number ``d - 2`` of off-line neighbours and every other vertex
    the same number ``d - 1`` of forward neighbours.
    """

    def __init__(self, psi: End, phi: End, d: int, max_depth: int = 256):
        self.psi, self.phi, self.d = psi, phi, d
        depth = 1
        while psi.prefix(depth) == phi.prefix(depth):
            depth *= 2
            if depth > max_depth:
                raise HypothesisError("ends agree up to the maximal checked depth")
        self.branch = lcp_length(psi.prefix(depth), phi.prefix(depth))

    def line_vertex(self, x: int) -> TreeWord:
        p = self.branch
        return self.psi.prefix(p - x) if x <= 0 else self.phi.prefix(p + x)

    def _offline(self, x: int) -> list:
        on = {self.line_vertex(x - 1), self.line_vertex(x + 1)}
        return [y for y in tree_neighbors(self.line_vertex(x), self.d) if y not in on]

    def encode(self, word: TreeWord) -> tuple:
        p = self.branch
        depth = max(len(word), p) + 2
        a, b = self.psi.prefix(depth), self.phi.prefix(depth)
        la, lb = lcp_length(a, word), lcp_length(b, word)
        if la > p:
            x = -(la - p)
        elif lb > p:
            x = lb - p
        else:
            x = 0
        proj = self.line_vertex(x)
        m = lcp_length(proj, word)
        path = [proj[:s] for s in range(len(proj), m - 1, -1)]
        path += [word[:s] for s in range(m + 1, len(word) + 1)]
        if len(path) == 1:
            return x, ()
        code = [self._offline(x).index(path[1])]
        for s in range(1, len(path) - 1):
            fwd = [y for y in tree_neighbors(path[s], self.d) if y != path[s - 1]]
            code.append(fwd.index(path[s + 1]))
        return x, tuple(code)

    def decode(self, x: int, code: tuple) -> TreeWord:
        cur = self.line_vertex(x)
        if not code:
            return cur
        prev, cur = cur, self._offline(x)[code[0]]
        for c in code[1:]:
            fwd = [y for y in tree_neighbors(cur, self.d) if y != prev]
            prev, cur = cur, fwd[c]
        return cur

    def __call__(self, word: TreeWord, steps: int = 1) -> TreeWord:
        x, code = self.encode(tuple(word))
        return self.decode(x + steps, code)


def _distinct_ends(a, b, depth=64) -> bool:
    return a.prefix(depth) != b.prefix(depth)


def apply_balanced_shift(
    f: DistanceLikeFunction,
    g: DistanceLikeFunction,
    i: int,
    j: int,
    n: int,
    v: Vertex,
    d: int | None = None,
) -> tuple:
    """Evaluate ``tau_n f`` and ``tau_n g`` at ``v``.

    ``tau_n`` translates coordinate ``i`` by ``n`` steps toward ``phi_i`` and
    coordinate ``j`` by ``n`` steps toward ``psi_j`` (``psi`` the ends of
    ``f``, ``phi`` those of ``g``).  Since ``tau f (v) = f(tau^{-1} v)`` the
    displaced argument is evaluated directly; both values equal ``f(v)`` and
    ``g(v)`` because ``tau_n`` fixes both functions.  ``d`` defaults to the
    degree recorded on the ends.
    """
    if i == j:
        raise HypothesisError("the two shifted coordinates must differ")
    if n <= 0:
        raise ParameterError(f"n must be positive, got {n}")
    for c in (i, j):
        a, b = f.directions[c], g.directions[c]
        if not (isinstance(a, End) and isinstance(b, End)):
            raise HypothesisError(f"coordinate {c} needs end directions in both functions")
        if not _distinct_ends(a, b):
            raise HypothesisError(f"ends agree in coordinate {c}")
    if d is None:
        d = f.directions[i].d
        if d is None:
            raise ParameterError("the degree d is needed for ends that do not record it")
    w = balanced_shift_inverse(f, g, i, j, n, v, d)
    return horo_eval(f, w), horo_eval(g, w)


def balanced_shift_inverse(f, g, i, j, n, v, d) -> Vertex:
    """``tau_n^{-1}(v)`` for the balanced shift of :func:`apply_balanced_shift`."""
    si = LineTranslation(f.directions[i], g.directions[i], d)
    sj = LineTranslation(f.directions[j], g.directions[j], d)
    w = list(v)
    w[i] = si(v[i], -n)
    w[j] = sj(v[j], n)
    return tuple(w)


# ---------------------------------------------------------------------------
# exact sublevel measures


def _lcp_class_masses(d: int, length: int) -> list:
    """Harmonic mass of ``{psi : lcp(psi, a) = j}`` for a word ``a`` of given length."""
    if length == 0:
        return [1.0]
    out = [(d - 1) / d]
    for j in range(1, length):
        out.append((d - 2) / (d * float(d - 1) ** j))
    out.append(1.0 / (d * float(d - 1) ** (length - 1)))
    return out


def level_set_measure(params: TreeParams, u: Vertex, v: Vertex, m: int, theta0: float) -> float:
    """Exact mass of ``{(psi, l) : h^psi(u) + l <= m and h^psi(v) + l <= m}``.

    The mass is for ``beta^k x theta`` with ``theta(l) = theta0 (d-1)^l``,
    summed over the classes of ends by common-prefix length with ``v``.
    ``u`` must be the root.
    """
    if any(len(w) for w in u):
        raise ParameterError("u must be the root vertex")
    if theta0 <= 0:
        raise ParameterError(f"theta0 must be positive, got {theta0}")
    d = params.d
    v = params.check_vertex(v)
    norm = sum(len(w) for w in v)
    # distribution of sum_i j_i under the product of lcp-class masses
    weights = np.array([1.0])
    for w in v:
        weights = np.convolve(weights, _lcp_class_masses(d, len(w)))
    total = 0.0
    for s, wt in enumerate(weights):
        cap = min(m, m - norm + 2 * s)
        total += wt * level_mass_below(d, theta0, cap)
    return float(total)


def level_set_measure_mc(
    params: TreeParams,
    v: Vertex,
    m: int,
    theta0: float,
    samples: int,
    rng: np.random.Generator,
) -> tuple:
    """Monte Carlo estimate and standard error of :func:`level_set_measure`.

    Levels are drawn as ``m - G`` with ``G`` geometric of ratio ``1/(d-1)``,
    which is ``theta`` restricted to ``l <= m`` and normalised, so each draw
    has the constant weight ``level_mass_below(m)``.
    """
    d = params.d
    v = params.check_vertex(v)
    h = np.zeros(samples, dtype=np.int64)
    for w in v:
        if not w:
            continue
        rays = letters_from_uniforms(rng.random((samples, len(w))), d)
        agree = np.cumprod(rays == np.asarray(w, dtype=np.int8), axis=1)
        h += len(w) - 2 * agree.sum(axis=1)
    gap = rng.geometric(1.0 - 1.0 / (d - 1), size=samples) - 1
    hits = (h <= gap).astype(np.float64)
    scale = level_mass_below(d, theta0, m)
    return scale * hits.mean(), scale * hits.std(ddof=1) / np.sqrt(samples)
