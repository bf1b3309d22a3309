"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` or directly with
``python3 tests/test_acceptance.py``; the summary lines are also printed at
the end of any pytest session that includes this file.
"""

import math
import time

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from oracles import product_sphere_counts, tree_distance_table
from treevoronoi.cli import main
from treevoronoi.experiments import ExperimentConfig, run_experiment
from treevoronoi.horofunction import (
    DistanceLikeFunction,
    apply_balanced_shift,
    default_theta0,
    evaluate_on_ball,
    level_set_measure,
    level_set_measure_mc,
    sample_harmonic_end,
)
from treevoronoi.ipvt import _initial_sample, default_base, ideal_tessellation, ideal_values, sample_ipvt, wall
from treevoronoi.tree_graph import TreeParams, ball_size, parse_word, product_ball, sphere_size
from treevoronoi.voronoi import (
    Window,
    build_tessellation,
    certified_window_tessellation,
    delaunay_adjacency,
    sample_bernoulli_nuclei,
)

P = TreeParams(3, 2)
RESULTS = {}


def record(n, title, ok, detail, elapsed, budget):
    within = elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {n:2d} {status}: {title}; {detail}; {elapsed:.1f}s of {budget:.0f}s"
    RESULTS[n] = line
    print("\n" + line)
    return ok and within


def wilson(successes, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1 + z * z / n
    mid = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return mid - half, mid + half


# ---------------------------------------------------------------------------


def test_criterion_01_exact_combinatorics():
    t0 = time.perf_counter()
    bad = []
    for d in (3, 4):
        for k in (1, 2, 3):
            params = TreeParams(d, k)
            counts = product_sphere_counts(d, k, 8)
            for q in range(9):
                if sphere_size(params, q) != counts[q] or ball_size(params, q) != sum(counts[: q + 1]):
                    bad.append((d, k, q))
    ok = record(1, "sphere and ball sizes equal BFS enumeration, d in {3,4}, k in {1,2,3}, q <= 8",
                not bad, f"{len(bad)} mismatches", time.perf_counter() - t0, 10)
    assert ok


def _soundness_violations(tess, table, rowmap, edges):
    """Count violations of the four soundness properties on ``B_R`` of a finite tessellation."""
    ball = tess.ball
    R = tess.window.R
    n_in = tess.count(R)
    coords = ball.coords
    nuc = tess.nuclei
    x = coords[nuc.index]
    owner = tess.owner.astype(np.int64)
    v = {"partition": 0, "connectivity": 0, "geodesic": 0, "argmin": 0}

    # partition: every vertex has one valid owner, every nucleus owns itself
    v["partition"] += int(np.sum((owner < 0) | (owner >= len(nuc))))
    v["partition"] += int(np.sum(owner[nuc.index] != np.arange(len(nuc))))
    v["partition"] += int(not tess.certified[:n_in].all())

    # argmin oracle over all window nuclei by (distance, label), in row blocks
    inner = rowmap[coords[:n_in]]
    cols = [table[: inner[:, c].max() + 1, x[:, c]].astype(np.int32) << 15 for c in range(coords.shape[1])]
    rank = np.argsort(np.argsort(nuc.label)).astype(np.int32)
    best = np.empty(n_in, dtype=np.int64)
    dmin = np.empty(n_in, dtype=np.int64)
    for lo in range(0, n_in, 32):
        key = rank + cols[0][inner[lo : lo + 32, 0]]
        for c in range(1, len(cols)):
            key += cols[c][inner[lo : lo + 32, c]]
        best[lo : lo + 32] = key.argmin(axis=1)
        dmin[lo : lo + 32] = key.min(axis=1) >> 15
    v["argmin"] += int(np.sum(best != owner[:n_in]))
    v["argmin"] += int(np.sum(dmin != tess.value[:n_in]))

    # geodesic property: a neighbour one step closer to the owning nucleus has the same owner
    mine = x[owner[:n_in]]
    nbr = ball.neighbors[:n_in].astype(np.int64)
    closer_seen = np.zeros(n_in, dtype=bool)
    for s in range(nbr.shape[1]):
        u = nbr[:, s]
        du = np.zeros(n_in, dtype=np.int32)
        for c in range(coords.shape[1]):
            du += table[rowmap[coords[u, c]], mine[:, c]]
        closer = du == tess.value[:n_in] - 1
        closer_seen |= closer
        v["geodesic"] += int(np.sum(closer & (owner[u] != owner[:n_in])))
    v["geodesic"] += int(np.sum(~closer_seen & (tess.value[:n_in] > 0)))

    # connectivity: each cell is one component of the window graph cut along cell borders
    a, b = edges
    same = owner[a] == owner[b]
    g = coo_matrix((np.ones(int(same.sum()), np.int8), (a[same], b[same])), shape=(tess.size,) * 2)
    ncomp, _ = connected_components(g, directed=False)
    v["connectivity"] += abs(ncomp - len(np.unique(owner)))
    return v


def test_criterion_02_tessellation_soundness():
    t0 = time.perf_counter()
    R = 6
    totals = {"partition": 0, "connectivity": 0, "geodesic": 0, "argmin": 0}
    tables = {}
    runs = 0
    for lam in (0.05, 0.2):
        for seed in range(500):
            tess = certified_window_tessellation(P, None, R, lam, np.random.SeedSequence([2, seed]))
            N = tess.window.radius
            if N not in tables:
                tb = product_ball(P, N).tree
                inner = int(tb.starts[R + 2])  # tree words of depth <= R + 1
                rowmap = np.full(tb.n, -1, dtype=np.int64)
                rowmap[:inner] = np.arange(inner)
                edges = product_ball(P, N).edges(N)
                tables[N] = (tree_distance_table(tb.words[:inner], tb.words), rowmap, edges)
            for key, n in _soundness_violations(tess, *tables[N]).items():
                totals[key] += n
            runs += 1
    ok = record(2, "partition, cell connectivity, geodesic-through-cell and argmin agreement on B_6",
                not any(totals.values()), f"{runs} tessellations, violations {totals}",
                time.perf_counter() - t0, 120)
    assert ok


def test_criterion_03_certification_stability():
    t0 = time.perf_counter()
    R = 4
    finite_bad = 0
    for seed in range(100):
        seq = np.random.SeedSequence([3, seed])
        tess = certified_window_tessellation(P, None, R, 0.1, seq)
        wide = build_tessellation(sample_bernoulli_nuclei(Window.at_root(P, R, 2 * tess.window.M), 0.1, seq))
        n = tess.count(R)
        a = tess.cell_labels[tess.owner[:n]].tobytes()
        b = wide.cell_labels[wide.owner[:n]].tobytes()
        finite_bad += a != b
    ideal_bad = 0
    for seed in range(100):
        smp = sample_ipvt(P, R, rng=np.random.SeedSequence([3, 1, seed]))
        before = ideal_tessellation(smp, R)
        key = smp.labels[before.owner].tobytes(), before.value.tobytes()
        smp.raise_cutoff(smp.cutoff + 5)
        value, owner = ideal_values(smp, R)
        ideal_bad += key != (smp.labels[owner].tobytes(), value.tobytes())
    ok = record(3, "ownership on B_4 unchanged by doubling M (finite) and cutoff + 5 (ideal)",
                finite_bad == 0 and ideal_bad == 0,
                f"finite mismatches {finite_bad}/100, ideal mismatches {ideal_bad}/100",
                time.perf_counter() - t0, 120)
    assert ok


def test_criterion_04_ipvt_level_law():
    t0 = time.perf_counter()
    theta0 = default_theta0(3)
    base = default_base(3, theta0)
    levels = np.arange(base - 2, base + 4)
    counts = np.zeros((10_000, len(levels)))
    for s in range(len(counts)):
        lv = _initial_sample(P, theta0, np.random.SeedSequence([4, s]), base, int(levels[-1])).levels
        lv = lv[(lv >= levels[0]) & (lv <= levels[-1])] - levels[0]
        counts[s] = np.bincount(lv, minlength=len(levels))
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(len(counts))
    expect = theta0 * 2.0 ** levels
    z = (mean - expect) / se
    ok = record(4, "mean count at level m matches theta0 (d-1)^m within 3 SE, 6 levels, 10^4 samples",
                bool(np.all(np.abs(z) < 3)), "z = " + ", ".join(f"{m}:{x:+.2f}" for m, x in zip(levels, z)),
                time.perf_counter() - t0, 120)
    assert ok


def test_criterion_05_theta_ratio():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(estimator="theta_ratio", lambdas=(1e-3,), replicas=500, seed=5)
    rows = run_experiment(cfg)
    zs = [r.extra["z"] for r in rows if "ratio" not in r.point]
    ok = record(5, "theta-ratio z-scores within +-4, lambda = 1e-3, 500 replicas",
                len(zs) == len(cfg.levels) and all(abs(z) <= 4 for z in zs),
                "z = " + ", ".join(f"{z:+.2f}" for z in zs), time.perf_counter() - t0, 120)
    assert ok


def test_criterion_06_level_measure():
    t0 = time.perf_counter()
    configs = [
        (TreeParams(3, 2), (parse_word("0.1"), parse_word("2")), 0, 1.0),
        (TreeParams(3, 2), (parse_word("1.0.0"), ()), 1, 0.5),
        (TreeParams(4, 2), (parse_word("3.2"), parse_word("0.0.1")), -1, 2.0 / 3.0),
        (TreeParams(3, 3), (parse_word("0"), parse_word("1.1"), parse_word("2.0")), 2, 0.5),
        (TreeParams(3, 1), (parse_word("0.1.0.1"),), 0, 0.5),
    ]
    zs = []
    for i, (params, v, m, theta0) in enumerate(configs):
        exact = level_set_measure(params, params.root, v, m, theta0)
        est, se = level_set_measure_mc(params, v, m, theta0, 200_000, np.random.default_rng([6, i]))
        zs.append((est - exact) / se)
    agree = all(abs(z) < 3 for z in zs)
    # decay along a geodesic against C n^k (d-1)^(-n/4), C fit on the first two points
    ns = list(range(2, 17, 2))
    vals = []
    for n in ns:
        v = ((0,) + (1,) * (n // 2 - 1), (2,) + (0,) * (n // 2 - 1))
        vals.append(level_set_measure(P, P.root, v, 0, default_theta0(3)))
    env = [n**2 * 2.0 ** (-n / 4) for n in ns]
    C = max(vals[0] / env[0], vals[1] / env[1])
    decays = all(x <= C * e * (1 + 1e-12) for x, e in zip(vals, env))
    ok = record(6, "exact level-set measure vs Monte Carlo on 5 configurations, decay envelope",
                agree and decays, "z = " + ", ".join(f"{z:+.2f}" for z in zs) + f"; envelope holds: {decays}",
                time.perf_counter() - t0, 60)
    assert ok


def test_criterion_07_unbounded_borders():
    t0 = time.perf_counter()
    nonempty = grows = total = uncertain = 0
    meets = meets_and_grows = 0
    for s in range(50):
        smp = sample_ipvt(P, 10, rng=np.random.SeedSequence([7, s]))
        tess = ideal_tessellation(smp, 10)
        # certified pairs: cells adjacent inside B_5, ten drawn at random
        pairs = delaunay_adjacency(tess, radius=5).pairs
        pick = pairs[np.random.default_rng([7, s]).permutation(len(pairs))[:10]]
        for a, b in pick:
            w10 = wall(smp, int(a), int(b), 2, 10)
            w5 = wall(smp, int(a), int(b), 2, 5)
            total += 1
            nonempty += len(w10.certified) > 0
            grows += len(w10.certified) > len(w5.certified)
            uncertain += len(w10.uncertain)
            if len(w5.certified):
                meets += 1
                meets_and_grows += len(w10.certified) > len(w5.certified)
    f_nonempty, f_grows = nonempty / total, grows / total
    detail = (f"{total} pairs, nonempty at L=10 {f_nonempty:.1%} (need 90%), larger at L=10 {f_grows:.1%} "
              f"(need 80%), uncertain vertices {uncertain}; pairs with a wall in B_5 that grow: "
              f"{meets_and_grows}/{meets}")
    ok = record(7, "R_wall=2 walls nonempty and growing from L=5 to L=10",
                f_nonempty >= 0.9 and f_grows >= 0.8, detail, time.perf_counter() - t0, 300)
    assert ok


def test_criterion_08_neighbor_completeness():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(estimator="neighbor_completeness", lambdas=(0.3, 0.1, 0.03), R=3,
                           replicas=200, seed=8)
    rows = {r.lam: r for r in run_experiment(cfg)}
    cis = {}
    for lam, r in rows.items():
        n = r.n_replicas - r.n_undecided
        cis[lam] = wilson(round(r.estimate * n), n)
    finite_ok = (rows[0.03].estimate > rows[0.1].estimate > rows[0.3].estimate
                 and cis[0.03][0] > cis[0.3][1])
    # the same estimator at R=1, reported only
    small = {r.lam: r.estimate for r in run_experiment(ExperimentConfig(
        estimator="neighbor_completeness", lambdas=(0.3, 0.1, 0.03), R=1, replicas=200, seed=8))}
    ideal = run_experiment(ExperimentConfig(estimator="ipvt_neighbor_fraction", L=(8, 12, 16), inner=4,
                                            ipvt_samples=6, replicas=6, seed=8))
    fr = [r.estimate for r in ideal]
    ideal_ok = all(a <= b for a, b in zip(fr, fr[1:]))
    detail = ("R=3 estimates " + ", ".join(f"{lam}:{rows[lam].estimate:.3f}" for lam in (0.3, 0.1, 0.03))
              + "; R=1 (reported only) " + ", ".join(f"{lam}:{small[lam]:.3f}" for lam in (0.3, 0.1, 0.03))
              + "; ideal fraction at L=8,12,16 " + ", ".join(f"{x:.3f}" for x in fr))
    ok = record(8, "all cells meeting B_3 pairwise adjacent, trend in lambda; ideal fraction monotone in L",
                finite_ok and ideal_ok, detail, time.perf_counter() - t0, 600)
    assert ok


def test_criterion_09_local_uniqueness():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(estimator="local_uniqueness", lambdas=(0.3, 0.03), ps=(0.8,), R=3,
                           replicas=500, seed=9)
    rows = {r.lam: r for r in run_experiment(cfg)}
    cis = {}
    for lam, r in rows.items():
        n = r.n_replicas - r.n_undecided
        cis[lam] = wilson(round(r.estimate * n), n)
    ok = rows[0.03].estimate > rows[0.3].estimate and cis[0.03][0] > cis[0.3][1]
    detail = "; ".join(
        f"lambda={lam}: {rows[lam].estimate:.3f} CI [{cis[lam][0]:.3f}, {cis[lam][1]:.3f}], "
        f"undecided {rows[lam].n_undecided}/500" for lam in (0.3, 0.03))
    ok = record(9, "P(A) at lambda=0.03 above lambda=0.3 with disjoint 95% Wilson CIs, p=0.8, R=3",
                ok, detail, time.perf_counter() - t0, 600)
    assert ok


def test_criterion_10_diagram_convergence():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(estimator="diagram_tv", lambdas=(0.3, 0.1, 0.03), sub_radius=1,
                           replicas=1000, ipvt_samples=1000, bootstrap=1000, seed=10)
    rows = {r.lam: r for r in run_experiment(cfg)}
    tv = [rows[lam].estimate for lam in (0.3, 0.1, 0.03)]
    se = [rows[lam].stderr for lam in (0.3, 0.1, 0.03)]
    ok = tv[0] > tv[1] > tv[2] and tv[2] + 1.96 * se[2] < tv[0] - 1.96 * se[0]
    detail = ", ".join(f"lambda={lam}: {t:.3f} +- {s:.3f}" for lam, t, s in zip((0.3, 0.1, 0.03), tv, se))
    ok = record(10, "TV distance of B_1 bond laws to the ideal law decreases in lambda",
                ok, detail, time.perf_counter() - t0, 600)
    assert ok


def test_criterion_11_stabilizer_invariance():
    t0 = time.perf_counter()
    ball = product_ball(P, 6)
    verts = ball.vertices()
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(100):
        ends_f = tuple(sample_harmonic_end(P, 4, np.random.default_rng(rng.integers(2**63))) for _ in range(2))
        ends_g = tuple(sample_harmonic_end(P, 4, np.random.default_rng(rng.integers(2**63))) for _ in range(2))
        f = DistanceLikeFunction(ends_f, int(rng.integers(-3, 4)))
        g = DistanceLikeFunction(ends_g, int(rng.integers(-3, 4)))
        i, j = (0, 1) if rng.random() < 0.5 else (1, 0)
        n = int(rng.integers(1, 11))
        ref_f, ref_g = evaluate_on_ball(f, ball), evaluate_on_ball(g, ball)
        for idx, v in enumerate(verts):
            if apply_balanced_shift(f, g, i, j, n, v) != (ref_f[idx], ref_g[idx]):
                bad += 1
    ok = record(11, "balanced shifts preserve both functions on all of B_6, 100 configurations",
                bad == 0, f"{bad} changed evaluations", time.perf_counter() - t0, 60)
    assert ok


def test_criterion_12_determinism(tmp_path):
    t0 = time.perf_counter()
    configs = {
        "local_uniqueness": "lambda=0.3,0.1 p=0.8,0.5 R=1 replicas=8",
        "two_point": "lambda=0.3 p=0.9 R=2 replicas=8 pairs=o:0.1/;o:1/1",
        "neighbor_completeness": "lambda=0.3 R=1 replicas=8",
        "cell_count_geq_K": "lambda=0.3 R=2 replicas=8 K=4",
        "theta_ratio": "lambda=0.003 replicas=20",
        "diagram_tv": "lambda=0.3,0.1 replicas=30 ipvt_samples=30 bootstrap=50",
        "ipvt_neighbor_fraction": "L=4,5 inner=2 replicas=3",
    }
    differing = []
    for name, text in configs.items():
        cfg_path = tmp_path / f"{name}.cfg"
        cfg_path.write_text(f"estimator={name} seed=12 {text}\n")
        outputs = []
        for run, threads in enumerate((1, 1, 3, 8)):
            out = tmp_path / f"{name}-{run}"
            code = main(["simulate", "--config", str(cfg_path), "--threads", str(threads), "--out-dir", str(out)])
            outputs.append(None if code else (out / f"{name}-seed12.csv").read_bytes())
        if None in outputs or len(set(outputs)) != 1:
            differing.append(name)
    ok = record(12, "byte-identical CSV across reruns and --threads 1, 3, 8 for every estimator",
                not differing, f"{len(configs)} estimators, differing: {differing or 'none'}",
                time.perf_counter() - t0, 60)
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
