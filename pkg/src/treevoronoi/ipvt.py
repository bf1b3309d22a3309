"""Direct sampler of the ideal Poisson-Voronoi tessellation (IPVT).

The point process lives on distance-like functions ``h^psi + m`` with
intensity ``beta^k x theta``, ``theta(m) = theta0 (d-1)^m``.  Only the
finitely many points with ``f(o) <= M`` are drawn.

Windowing argument.  A point with ``f(o) > M`` satisfies
``f(v) >= f(o) - |v| >= M + 1 - |v|`` by the 1-Lipschitz property.  If the
best sampled value ``c_v`` satisfies ``c_v <= M - |v|`` for every ``v`` in
``B_L``, no unsampled point can own or tie for any vertex of ``B_L``, so
the sampled diagram on ``B_L`` is the ideal diagram.  This per-vertex test
implies the cruder ``M >= min_f f(o) + 2L``.

Levels and slabs.  Levels ``<= base`` form one Poisson slab whose levels
are ``base - G`` with ``G`` geometric; every level above ``base`` has its own
slab.  Each slab and each 32-letter block of its ends is drawn from its own
sub-stream, so raising the cutoff or deepening ends never changes what was
already drawn.

Evaluation on a ball.  For ``v`` in ``B_L``,
``f(v) = (m - L) + min_a dist(a, v)`` over the vertices
``a = (psi_1[:a_1], ..., psi_k[:a_k])`` with ``a_1 + ... + a_k = L``.  The
ideal diagram on ``B_L`` is therefore a multi-source search seeded at
these sphere points, and ``B_L`` contains a geodesic between any two of
its vertices so distances inside the ball are the true ones.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationError, ParameterError, SamplingError
from .horofunction import (
    DistanceLikeFunction,
    End,
    default_theta0,
    letters_from_uniforms,
    level_mass_below,
)
from .rng import as_seed_sequence, child_sequence, generator, signed_key
from .tree_graph import TreeParams, ball_size, product_ball, sphere_size
from .voronoi import Tessellation, Window, lexicographic_bfs

BLOCK = 32
_SLAB, _END, _FIX = 0x51AB, 0xE4D, 0xF1C
_MAX_FUNCTIONS = 60_000_000
_SEED_CHUNK = 4_000_000


def _slab_code(level: int | None) -> int:
    return 0 if level is None else 1 + signed_key(level)


def default_base(d: int, theta0: float) -> int:
    """Largest level whose mass at or below it is at most one."""
    b = 0
    while level_mass_below(d, theta0, b) > 1:
        b -= 1
    while level_mass_below(d, theta0, b + 1) <= 1:
        b += 1
    return b


class _Slab:
    """Points of one slab with lazily drawn end letters."""

    def __init__(self, seq, code, levels, labels, d, k):
        self.seq, self.code = seq, code
        self.levels, self.labels = levels, labels
        self.d, self.k = d, k
        self.blocks = {}

    def __len__(self):
        return len(self.levels)

    def block(self, coord: int, b: int) -> np.ndarray:
        key = (coord, b)
        if key not in self.blocks:
            rng = generator(child_sequence(self.seq, _END, self.code, coord, b))
            u = rng.random((len(self), BLOCK))
            self.blocks[key] = letters_from_uniforms(u, self.d, first=b * BLOCK)
        return self.blocks[key]

    def letters(self, coord: int, depth: int) -> np.ndarray:
        nb = -(-depth // BLOCK)
        if nb == 0:
            return np.empty((len(self), 0), dtype=np.int8)
        return np.concatenate([self.block(coord, b) for b in range(nb)], axis=1)[:, :depth]


def _draw_slab(seq, d, k, theta0, base, level) -> _Slab:
    code = _slab_code(level)
    rng = generator(child_sequence(seq, _SLAB, code))
    if level is None:
        n = int(rng.poisson(level_mass_below(d, theta0, base)))
        levels = base - (rng.geometric(1.0 - 1.0 / (d - 1), size=n) - 1)
    else:
        n = int(rng.poisson(theta0 * float(d - 1) ** level))
        levels = np.full(n, level)
    labels = rng.random(n)
    order = np.lexsort((labels, levels))
    return _Slab(seq, code, levels[order].astype(np.int64), labels[order], d, k)


@dataclass
class IpvtSample:
    """All process points with ``f(o) <= cutoff``, sorted by (level, label).

    Function ids are positions in this order; raising the cutoff appends
    new ids and leaves existing ones unchanged.
    """

    params: TreeParams
    theta0: float
    seed: np.random.SeedSequence
    base: int
    cutoff: int
    slabs: list = field(repr=False)
    certified_radius: int = -1
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._refresh()

    def _refresh(self):
        self.levels = np.concatenate([s.levels for s in self.slabs]) if self.slabs else np.empty(0, np.int64)
        labels = np.concatenate([s.labels for s in self.slabs]) if self.slabs else np.empty(0)
        labels = labels.copy()
        fixes = 0
        if len(np.unique(labels)) != len(labels):
            seen = set()
            for i, y in enumerate(labels.tolist()):
                attempt = 0
                while y in seen:
                    attempt += 1
                    y = float(generator(child_sequence(self.seed, _FIX, i, attempt)).random())
                    fixes += 1
                seen.add(y)
                labels[i] = y
        self.labels = labels
        self.meta["collisions"] = fixes
        self._starts = np.cumsum([0] + [len(s) for s in self.slabs])
        self._letter_cache = {}

    def __len__(self):
        return len(self.levels)

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def k(self) -> int:
        return self.params.k

    def letters(self, coord: int, depth: int, ids=None) -> np.ndarray:
        """End letters of coordinate ``coord`` to ``depth``, one row per function."""
        key = (coord, depth)
        if key not in self._letter_cache:
            rows = [s.letters(coord, depth) for s in self.slabs]
            self._letter_cache[key] = np.concatenate(rows, axis=0) if rows else np.empty((0, depth), np.int8)
        out = self._letter_cache[key]
        return out if ids is None else out[ids]

    def _locate(self, i: int) -> tuple:
        s = int(np.searchsorted(self._starts, i, side="right")) - 1
        return self.slabs[s], i - int(self._starts[s])

    def function(self, i: int) -> DistanceLikeFunction:
        """Function ``i`` with ends that deepen from the sample's streams."""
        if not 0 <= i < len(self):
            raise ParameterError(f"unknown function id {i}")
        slab, j = self._locate(i)
        dirs = []
        for c in range(self.k):
            def extend(count, n, c=c):
                return slab.letters(c, count + n)[j, count:].tolist()

            dirs.append(End((), extend, self.d))
        return DistanceLikeFunction(tuple(dirs), int(self.levels[i]), float(self.labels[i]), {"id": i})

    def raise_cutoff(self, new_cutoff: int):
        """Add independent slabs for the levels in ``(cutoff, new_cutoff]``."""
        for m in range(self.cutoff + 1, new_cutoff + 1):
            self.slabs.append(_draw_slab(self.seed, self.d, self.k, self.theta0, self.base, m))
        if new_cutoff > self.cutoff:
            self.cutoff = new_cutoff
            self.certified_radius = -1
            self._refresh()
        if len(self) > _MAX_FUNCTIONS:
            raise SamplingError(f"{len(self)} functions exceed the sampler limit")

    # -- serialization ----------------------------------------------------

    def to_dict(self, depth: int) -> dict:
        """Levels, labels and end prefixes (digit strings) for replay."""
        prefixes = [
            ["".join(map(str, row)) for row in self.letters(c, depth).tolist()]
            for c in range(self.k)
        ]
        return {
            "d": self.d,
            "k": self.k,
            "theta0": self.theta0,
            "base": self.base,
            "cutoff": self.cutoff,
            "seed": {"entropy": int(self.seed.entropy), "spawn_key": list(self.seed.spawn_key)},
            "depth": depth,
            "levels": self.levels.tolist(),
            "labels": self.labels.tolist(),
            "ends": [list(col) for col in zip(*prefixes)] if len(self) else [],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IpvtSample":
        """Rebuild from the recorded seed and check it against the stored points."""
        params = TreeParams(int(data["d"]), int(data["k"]))
        seq = np.random.SeedSequence(data["seed"]["entropy"], spawn_key=tuple(data["seed"]["spawn_key"]))
        sample = _initial_sample(params, float(data["theta0"]), seq, int(data["base"]), int(data["cutoff"]))
        if sample.levels.tolist() != list(data["levels"]) or sample.labels.tolist() != list(data["labels"]):
            raise SamplingError("recorded points do not match the recorded seed")
        depth = int(data["depth"])
        for c in range(params.k):
            got = ["".join(map(str, r)) for r in sample.letters(c, depth).tolist()]
            if got != [e[c] for e in data["ends"]]:
                raise SamplingError("recorded end prefixes do not match the recorded seed")
        return sample


def _initial_sample(params, theta0, seq, base, cutoff) -> IpvtSample:
    d, k = params.d, params.k
    slabs = [_draw_slab(seq, d, k, theta0, base, None)]
    for m in range(base + 1, cutoff + 1):
        slabs.append(_draw_slab(seq, d, k, theta0, base, m))
    return IpvtSample(params, theta0, seq, base, max(cutoff, base), slabs)


def initial_cutoff(params: TreeParams, L: int, theta0: float) -> int:
    """``L + x`` with ``x`` the least level whose mass below reaches ``log |S_L|`` (at least 3)."""
    need = max(3.0, math.log(float(sphere_size(params, L))))
    x = default_base(params.d, theta0)
    while level_mass_below(params.d, theta0, x) < need:
        x += 1
    return L + x


# ---------------------------------------------------------------------------
# evaluation on balls


def _compositions(total: int, parts: int) -> np.ndarray:
    rows = [c for c in itertools.product(range(total + 1), repeat=parts - 1) if sum(c) <= total]
    return np.array([list(c) + [total - sum(c)] for c in rows], dtype=np.int64).reshape(-1, parts)


def _seed_chunks(sample: IpvtSample, L: int, ids: np.ndarray, bound=None):
    """Yield ``(vertex index, value, function id)`` of the sphere seeds of ``ids``.

    With ``bound`` (an upper bound on the best value at each vertex), seeds
    whose value exceeds the bound at their own vertex are dropped: they lose
    everywhere by the Lipschitz property of the bound.
    """
    ball = product_ball(sample.params, L)
    tb = ball.tree
    comps = _compositions(L, sample.k)
    step = max(1, _SEED_CHUNK // max(1, len(comps)))
    for lo in range(0, len(ids), step):
        chunk = ids[lo: lo + step]
        tids = [tb.ids_along(sample.letters(c, L, chunk).astype(np.int64)) for c in range(sample.k)]
        coords = np.stack([tids[c][:, comps[:, c]] for c in range(sample.k)], axis=-1)
        idx = ball.lookup(coords.reshape(-1, sample.k))
        val = np.repeat(sample.levels[chunk] - L, len(comps))
        fid = np.repeat(chunk, len(comps))
        if bound is not None:
            keep = val <= bound[idx]
            idx, val, fid = idx[keep], val[keep], fid[keep]
        yield idx, val, fid


def ideal_values(sample: IpvtSample, L: int, exclude=(), prune: bool = True) -> tuple:
    """Best ``(value, function id)`` over the sampled functions on ``B_L(o)``.

    Returns ``(value, owner)``; functions in ``exclude`` are left out.
    """
    ball = product_ball(sample.params, L)
    n = ball.size
    rank = np.empty(len(sample), dtype=np.int64)
    by_rank = np.argsort(sample.labels, kind="stable")
    rank[by_rank] = np.arange(len(sample))
    ids = np.setdiff1d(np.arange(len(sample)), np.asarray(exclude, dtype=np.int64))
    if len(ids) == 0:
        return np.full(n, np.iinfo(np.int64).max // 4), np.full(n, -1)
    bound = None
    if prune and len(ids) > 4096:
        # a cheap first pass over the lower levels bounds the best values
        low = ids[sample.levels[ids] <= np.quantile(sample.levels[ids], 0.25)]
        parts = list(_seed_chunks(sample, L, low))
        s_idx = np.concatenate([p[0] for p in parts])
        s_val = np.concatenate([p[1] for p in parts])
        s_fid = np.concatenate([p[2] for p in parts])
        bound, _ = lexicographic_bfs(ball.neighbors, n, s_idx, s_val, rank[s_fid])
    parts = list(_seed_chunks(sample, L, ids, bound))
    s_idx = np.concatenate([p[0] for p in parts])
    s_val = np.concatenate([p[1] for p in parts])
    s_fid = np.concatenate([p[2] for p in parts])
    value, best = lexicographic_bfs(ball.neighbors, n, s_idx, s_val, rank[s_fid])
    return value, by_rank[best]


def certifies(sample: IpvtSample, L: int, value: np.ndarray) -> bool:
    dist = product_ball(sample.params, L).dist
    return bool(np.all(value + dist <= sample.cutoff))


def sample_ipvt(
    params: TreeParams,
    R: int,
    theta0: float | None = None,
    rng=0,
    extra: int = 0,
    max_cutoff: int | None = None,
) -> IpvtSample:
    """Sample the IPVT with a cutoff certified for ownership on ``B_R(o)``.

    ``extra`` raises the starting cutoff, which widens the region where
    walls can be certified.  The cutoff grows one level at a time until
    every vertex of ``B_R`` passes the per-vertex test.
    """
    theta0 = default_theta0(params.d) if theta0 is None else float(theta0)
    if theta0 <= 0:
        raise ParameterError(f"theta0 must be positive, got {theta0}")
    if R < 0:
        raise ParameterError(f"R must be nonnegative, got {R}")
    seq = as_seed_sequence(rng)
    base = default_base(params.d, theta0)
    M = initial_cutoff(params, R, theta0) + extra
    cap = M + 64 if max_cutoff is None else max_cutoff
    if cap < M:
        raise SamplingError(f"max_cutoff {cap} is below the starting cutoff {M}")
    sample = _initial_sample(params, theta0, seq, base, M)
    while True:
        if len(sample):
            value, owner = ideal_values(sample, R)
            if certifies(sample, R, value):
                sample.certified_radius = R
                sample.meta["ownership"] = (R, value, owner)
                return sample
        if sample.cutoff + 1 > cap:
            raise SamplingError(f"cutoff exceeded {cap} without certifying radius {R}")
        sample.raise_cutoff(sample.cutoff + 1)


def ideal_tessellation(sample: IpvtSample, R: int) -> Tessellation:
    """Ideal Voronoi diagram on ``B_R(o)``; cell ids are function ids."""
    cached = sample.meta.get("ownership")
    if cached is not None and cached[0] == R and sample.certified_radius >= R:
        _, value, owner = cached
    else:
        value, owner = ideal_values(sample, R)
        if not certifies(sample, R, value):
            raise CertificationError(f"cutoff {sample.cutoff} does not certify radius {R}")
        sample.certified_radius = max(sample.certified_radius, R)
        sample.meta["ownership"] = (R, value, owner)
    window = Window.at_root(sample.params, R, 0)
    dist = product_ball(sample.params, R).dist
    tess = Tessellation(window, sample, owner.astype(np.int32), value, sample.labels, R, value + dist <= sample.cutoff)
    tess.meta["cells"] = np.unique(owner)
    return tess


# ---------------------------------------------------------------------------
# walls


@dataclass
class WallSet:
    """The ``R_wall``-wall of two functions inside ``B_L(o)``.

    ``certified`` and ``uncertain`` hold ball indices; a vertex is uncertain
    when the sampled functions pass the test but unsampled ones might not.
    """

    ids: tuple
    R_wall: int
    L: int
    certified: np.ndarray
    uncertain: np.ndarray

    def vertices(self, params: TreeParams, which: str = "certified") -> list:
        ball = product_ball(params, self.L)
        return [ball.vertex(int(i)) for i in getattr(self, which)]


def function_values(sample: IpvtSample, i: int, L: int) -> np.ndarray:
    """Exact values of function ``i`` on ``B_L(o)``."""
    ball = product_ball(sample.params, L)
    (idx, val, _), = _seed_chunks(sample, L, np.array([i]))
    value, _ = lexicographic_bfs(ball.neighbors, ball.size, idx, val, np.zeros(len(idx), np.int64))
    return value


def wall(sample: IpvtSample, id1: int, id2: int, R_wall: int, L: int) -> WallSet:
    """Vertices ``v`` of ``B_L`` with ``|f1(v) - f2(v)| <= 1`` and every other
    function exceeding ``f1(v) + R_wall`` there."""
    n = len(sample)
    if id1 == id2 or not (0 <= id1 < n and 0 <= id2 < n):
        raise ParameterError(f"need two distinct function ids in [0, {n}), got {id1}, {id2}")
    if R_wall <= 1:
        raise ParameterError(f"R_wall must exceed 1, got {R_wall}")
    f1 = function_values(sample, id1, L)
    f2 = function_values(sample, id2, L)
    other, _ = ideal_values(sample, L, exclude=(id1, id2))
    hit = (np.abs(f1 - f2) <= 1) & (other > f1 + R_wall)
    dist = product_ball(sample.params, L).dist
    safe = f1 + R_wall <= sample.cutoff - dist
    return WallSet((id1, id2), R_wall, L, np.flatnonzero(hit & safe), np.flatnonzero(hit & ~safe))
