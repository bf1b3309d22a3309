import numpy as np
import pytest

from oracles import flood_clusters
from treevoronoi.errors import ParameterError
from treevoronoi.percolation import (
    color_and_cluster,
    cluster_frequency_srw,
    local_uniqueness_event,
    two_point_event,
)
from treevoronoi.tree_graph import TreeParams, vertex_neighbors
from treevoronoi.voronoi import (
    NucleusSample,
    Window,
    build_tessellation,
    certified_window_tessellation,
)

P = TreeParams(3, 2)


@pytest.fixture(scope="module")
def tess():
    return certified_window_tessellation(P, None, 3, 0.3, 8)


def same_partition(a, b):
    """Whether two labelings (``-1`` = unlabeled) induce the same partition."""
    if not np.array_equal(a < 0, b < 0):
        return False
    pairs = set(zip(a[a >= 0].tolist(), b[b >= 0].tolist()))
    return len(pairs) == len({x for x, _ in pairs}) == len({y for _, y in pairs})


def test_p_one_and_zero(tess):
    full = color_and_cluster(tess, 1.0, rng=0)
    assert full.black.all()
    assert full.num_clusters == 1
    assert np.all(full.cluster_of[tess.certified] == 0)
    assert local_uniqueness_event(full, 1) is True
    empty = color_and_cluster(tess, 0.0, rng=0)
    assert not empty.black.any() and empty.num_clusters == 0
    assert local_uniqueness_event(empty, 1) is False


def test_p_validation(tess):
    with pytest.raises(ParameterError):
        color_and_cluster(tess, 1.2, rng=0)


@pytest.mark.parametrize("block", range(4))
def test_clusters_match_flood_fill(block):
    for seed in range(50 * block, 50 * block + 50):
        tess = certified_window_tessellation(P, None, 1, 0.3, seed)
        check_flood_fill(tess, color_and_cluster(tess, 0.5, rng=seed))


def check_flood_fill(tess, ct):
    ball = tess.ball
    verts = ball.vertices()
    index = {v: i for i, v in enumerate(verts)}
    ok = tess.certified & ct.black[tess.owner]
    members = {}
    for i in np.flatnonzero(ok):
        members.setdefault(int(tess.owner[i]), []).append(verts[i])

    def adjacency(v):
        out = [w for w in vertex_neighbors(v, P.d) if w in index]
        return out + members[int(tess.owner[index[v]])]

    comp = flood_clusters(verts, ok, adjacency)
    roots = {r: n for n, r in enumerate(sorted(set(comp.values())))}
    expect = np.array([roots[comp[v]] if v in comp else -1 for v in verts])
    assert same_partition(ct.cluster_of, expect)


def test_cluster_ids_follow_first_vertex(tess):
    ct = color_and_cluster(tess, 0.6, rng=3)
    firsts = [int(np.flatnonzero(ct.cluster_of == c)[0]) for c in range(ct.num_clusters)]
    assert firsts == sorted(firsts)


def test_coupling_is_monotone(tess):
    marks = np.random.default_rng(4).random(tess.num_cells)
    low = color_and_cluster(tess, 0.4, marks=marks)
    high = color_and_cluster(tess, 0.7, marks=marks)
    assert np.all(high.black >= low.black)
    # a low cluster lies inside one high cluster
    for c in range(low.num_clusters):
        assert len(np.unique(high.cluster_of[low.cluster_of == c])) == 1
    same_seed = color_and_cluster(tess, 0.4, rng=9), color_and_cluster(tess, 0.7, rng=9)
    assert np.all(same_seed[1].black >= same_seed[0].black)


def test_connected_is_monotone_in_p():
    ps = (0.2, 0.4, 0.5, 0.6, 0.8)
    for seed in range(200):
        tess = certified_window_tessellation(P, None, 1, 0.4, seed)
        marks = np.random.default_rng(seed).random(tess.num_cells)
        pts = np.flatnonzero(tess.certified)
        rng = np.random.default_rng(seed)
        u, v = rng.choice(pts, size=(2, 20))
        prev = np.zeros(20, dtype=bool)
        for p in ps:
            ct = color_and_cluster(tess, p, marks=marks)
            now = np.array([ct.connected(a, b) for a, b in zip(u, v)])
            assert np.all(now >= prev)
            prev = now


def test_connectivity_is_an_equivalence(tess):
    ct = color_and_cluster(tess, 0.5, rng=1)
    pts = np.flatnonzero(tess.certified)[:40].tolist()
    for u in pts:
        assert ct.connected(u, u) == bool(ct.black[tess.owner[u]])
        for v in pts:
            assert ct.connected(u, v) == ct.connected(v, u)
            if ct.connected(u, v):
                for w in pts:
                    if ct.connected(v, w):
                        assert ct.connected(u, w)


def test_uncertified_vertex_rejected():
    w = Window.at_root(P, 2, 0)
    idx = np.array([w.ball.index_of(((0, 0), ()))])
    t = build_tessellation(NucleusSample(w, idx, np.array([0.3])))
    ct = color_and_cluster(t, 1.0, rng=0)
    bad = int(np.flatnonzero(~t.certified)[0])
    with pytest.raises(ParameterError):
        ct.connected(bad, 0)


def two_cell_strip():
    """Three cells whose nuclei are the neighbours of the root in the first tree."""
    w = Window.at_root(P, 3, 3)
    ball = w.ball
    pts = [((0,), ()), ((1,), ()), ((2,), ())]
    idx = np.array([ball.index_of(v) for v in pts])
    return build_tessellation(NucleusSample(w, idx, np.array([0.1, 0.2, 0.3])))


def test_handcrafted_three_cells():
    t = two_cell_strip()
    assert t.num_cells == 3
    marks = np.array([0.1, 0.1, 0.9])
    ct = color_and_cluster(t, 0.5, marks=marks)
    # the two black cells touch along the root, so they form one cluster
    assert ct.connected(((0,), ()), ((1,), ()))
    assert two_point_event(ct, ((0,), ()), ((1,), ())) is True
    assert two_point_event(ct, ((0,), ()), ((2,), ())) is False


def test_infinite_slab_cells_stay_open():
    # nuclei on the second coordinate only, so every cell is unbounded
    w = Window.at_root(P, 2, 4)
    ball = w.ball
    pts = [((), (0,)), ((), (1,)), ((), (2,))]
    idx = np.array(sorted(ball.index_of(v) for v in pts))
    t = build_tessellation(NucleusSample(w, idx, np.array([0.5, 0.6, 0.7])))
    root_cell = t.owner_of(P.root)
    marks = np.full(3, 0.1)
    marks[root_cell] = 0.9
    ct = color_and_cluster(t, 0.5, marks=marks)
    assert ct.num_clusters == 2
    assert not ct.closed.any()
    u, v = ((), (1, 0)), ((), (2, 0))
    assert two_point_event(ct, u, v) is None


def test_two_closed_components_give_false():
    # every vertex is a nucleus; the root and a vertex at distance 2 are
    # black and surrounded by white single-vertex cells
    w = Window.at_root(P, 3, 3)
    t = build_tessellation(NucleusSample(w, np.arange(w.ball.size), np.linspace(0.01, 0.99, w.ball.size)))
    assert t.certified.all()
    marks = np.ones(t.num_cells)
    marks[t.owner_of(P.root)] = 0.0
    marks[t.owner_of(((0, 1), ()))] = 0.0
    ct = color_and_cluster(t, 0.5, marks=marks)
    assert ct.num_clusters == 2 and ct.closed.all()
    assert local_uniqueness_event(ct, 1) is False
    marks[t.owner_of(((0,), ()))] = 0.0
    ct = color_and_cluster(t, 0.5, marks=marks)
    assert local_uniqueness_event(ct, 1) is True


def test_local_event_undecided_beyond_certified_radius(tess):
    ct = color_and_cluster(tess, 0.8, rng=0)
    assert local_uniqueness_event(ct, tess.certified_radius) is None


def test_local_event_center_check(tess):
    ct = color_and_cluster(tess, 0.8, rng=0)
    with pytest.raises(ParameterError):
        local_uniqueness_event(ct, 1, center=((0,), ()))


def test_srw_frequencies(tess):
    big = certified_window_tessellation(P, None, 6, 0.3, 1)
    ct = color_and_cluster(big, 1.0, rng=0)
    freq = cluster_frequency_srw(ct, P.root, 100_000, rng=1)
    assert freq[0] >= 0.99
    assert cluster_frequency_srw(color_and_cluster(big, 0.0, rng=0), P.root, 1000, rng=1) == {}
    ct = color_and_cluster(tess, 0.5, rng=2)
    freq = cluster_frequency_srw(ct, P.root, 5000, rng=3)
    assert sum(freq.values()) <= 1.0 + 1e-12
    assert all(0 <= c < ct.num_clusters for c in freq)
    again = cluster_frequency_srw(ct, P.root, 5000, rng=3)
    assert freq == again
