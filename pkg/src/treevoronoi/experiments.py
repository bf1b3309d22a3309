"""Monte Carlo estimators and their CSV/JSON output.

Every replica draws from its own stream,
``SeedSequence(seed, spawn_key=(estimator tag, bits of lambda, replica))``,
so results do not depend on how replicas are scheduled across threads.
Events that cannot be decided inside the certified window are counted as
undecided and left out of the estimate's denominator.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CertificationError, ConfigError
from .horofunction import default_theta0
from .ipvt import ideal_tessellation, sample_ipvt
from .percolation import color_and_cluster, local_uniqueness_event, two_point_event
from .rng import float_key, generator
from .tree_graph import TreeParams, parse_word, sphere_size, threshold_radius, vertex_distance
from .voronoi import (
    Window,
    bond_encoding,
    certified_window_tessellation,
    delaunay_adjacency,
    sample_bernoulli_nuclei,
)

ESTIMATORS = (
    "local_uniqueness",
    "neighbor_completeness",
    "cell_count_geq_K",
    "two_point",
    "theta_ratio",
    "diagram_tv",
    "ipvt_neighbor_fraction",
)
CSV_COLUMNS = (
    "name", "d", "k", "lambda", "p", "R", "point",
    "estimate", "stderr", "n_replicas", "n_undecided", "seed",
)
_MARKS, _IPVT, _BOOT = 1, 2, 3


@dataclass
class ExperimentConfig:
    """Parameters of one experiment run (see ``load_config`` for the text form)."""

    d: int = 3
    k: int = 2
    lambdas: tuple = (0.1,)
    ps: tuple = (0.8,)
    R: int = 3
    replicas: int = 200
    seed: int = 0
    theta0: float | None = None
    estimator: str = "local_uniqueness"
    out_dir: str = "results"
    K: int = 5
    levels: tuple = (-2, -1, 0, 1, 2)
    sub_radius: int = 1
    bootstrap: int = 1000
    ipvt_samples: int | None = None
    pairs: tuple | None = None
    margin: int | None = None
    L: tuple = (8, 12, 16)
    inner: int = 4

    def __post_init__(self):
        self.lambdas = tuple(float(x) for x in self.lambdas)
        self.ps = tuple(float(x) for x in self.ps)
        self.levels = tuple(int(x) for x in self.levels)
        self.L = tuple(int(x) for x in self.L)
        if self.theta0 is None and self.d >= 3:
            self.theta0 = default_theta0(self.d)
        self.validate()

    def validate(self):
        checks = [
            ("d", self.d >= 3, "must be at least 3"),
            ("k", self.k >= 1, "must be at least 1"),
            ("R", self.R >= 0, "must be nonnegative"),
            ("replicas", self.replicas >= 1, "must be at least 1"),
            ("lambda", bool(self.lambdas) and all(0 < x <= 1 for x in self.lambdas), "values must lie in (0, 1]"),
            ("p", bool(self.ps) and all(0 <= x <= 1 for x in self.ps), "values must lie in [0, 1]"),
            ("theta0", self.theta0 is not None and self.theta0 > 0, "must be positive"),
            ("estimator", self.estimator in ESTIMATORS, f"must be one of {', '.join(ESTIMATORS)}"),
            ("sub_radius", self.sub_radius >= 0, "must be nonnegative"),
            ("bootstrap", self.bootstrap >= 1, "must be at least 1"),
            ("K", self.K >= 0, "must be nonnegative"),
            ("L", bool(self.L) and all(x >= self.inner for x in self.L), "values must be at least inner"),
            ("seed", self.seed >= 0, "must be nonnegative"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(msg, key=key)

    @property
    def params(self) -> TreeParams:
        return TreeParams(self.d, self.k)

    def echo(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    """One output row; ``extra`` goes to the JSON summary only."""

    name: str
    d: int
    k: int
    lam: float | None
    p: float | None
    R: int
    point: str
    estimate: float
    stderr: float
    n_replicas: int
    n_undecided: int
    seed: int
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    def row(self) -> list:
        def num(x):
            return "" if x is None else repr(float(x))

        return [
            self.name, self.d, self.k, num(self.lam), num(self.p), self.R, self.point,
            num(self.estimate), num(self.stderr), self.n_replicas, self.n_undecided, self.seed,
        ]

    def sort_key(self):
        return (
            self.name,
            -1.0 if self.lam is None else self.lam,
            -1.0 if self.p is None else self.p,
            self.R,
            self.extra.get("order", 0),
            self.point,
        )


# ---------------------------------------------------------------------------
# streams and helpers


def estimator_tag(name: str) -> int:
    return zlib.crc32(name.encode())


def replica_sequence(seed: int, name: str, lam: float | None, replica: int) -> np.random.SeedSequence:
    """Stream of one replica; ``lam=None`` for replicas that do not depend on lambda."""
    key = 0 if lam is None else float_key(lam)
    return np.random.SeedSequence(seed, spawn_key=(estimator_tag(name), key, replica))


def _map(fn, n: int, threads: int) -> list:
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _binomial(outcomes) -> tuple:
    """``(estimate, stderr, undecided)`` from tri-state outcomes."""
    decided = [o for o in outcomes if o is not None]
    und = len(outcomes) - len(decided)
    if not decided:
        return float("nan"), float("nan"), und
    est = sum(decided) / len(decided)
    return est, math.sqrt(est * (1 - est) / len(decided)), und


def parse_vertex(text: str, k: int) -> tuple:
    """``"0.1/2"`` is the vertex with words ``0.1`` and ``2``; ``"o"`` is the root."""
    text = text.strip()
    if text in ("o", ""):
        return tuple(() for _ in range(k))
    parts = text.split("/")
    if len(parts) != k:
        raise ConfigError(f"vertex {text!r} needs {k} coordinates", key="pairs")
    return tuple(parse_word(p) for p in parts)


def parse_pairs(text: str, k: int) -> tuple:
    out = []
    for item in text.split(";"):
        if not item.strip():
            continue
        if ":" not in item:
            raise ConfigError(f"pair {item!r} must look like u:v", key="pairs")
        u, v = item.split(":", 1)
        out.append((parse_vertex(u, k), parse_vertex(v, k)))
    if not out:
        raise ConfigError("no pairs given", key="pairs")
    return tuple(out)


def _format_vertex(v) -> str:
    if not any(v):
        return "o"
    return "/".join(".".join(map(str, w)) for w in v)


def _default_pairs(cfg: ExperimentConfig) -> tuple:
    root = cfg.params.root
    far = tuple((0,) * cfg.R if i == 0 else () for i in range(cfg.k))
    return ((root, far),)


# ---------------------------------------------------------------------------
# tessellation-based events


def _tessellation(cfg, name, lam, i, radius):
    seq = replica_sequence(cfg.seed, name, lam, i)
    tess = certified_window_tessellation(cfg.params, None, radius, lam, seq, margin=cfg.margin)
    marks = generator(np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key + (_MARKS,)))
    return tess, marks.random(tess.num_cells)


def _event_rows(cfg, threads, name, radius, evaluate) -> list:
    """Run ``evaluate(tess, marks) -> {point: [outcome per p]}`` over all replicas."""
    rows = []
    for lam in cfg.lambdas:
        t0 = time.perf_counter()

        def one(i, lam=lam):
            try:
                tess, marks = _tessellation(cfg, name, lam, i, radius)
            except CertificationError as err:
                # the window cap was hit: every event of this replica is undecided
                return err
            return evaluate(tess, marks)

        outs = _map(one, cfg.replicas, threads)
        wall = time.perf_counter() - t0
        decided = [o for o in outs if not isinstance(o, CertificationError)]
        if not decided:
            raise outs[0]
        template = decided[0]
        for order, point in enumerate(template):
            for j, p in enumerate(cfg.ps if template[point][0] is not None else [None]):
                vals = [None if isinstance(o, CertificationError) else o[point][1][j] for o in outs]
                est, se, und = _binomial(vals)
                rows.append(ExperimentResult(
                    name, cfg.d, cfg.k, lam, p, cfg.R, point, est, se,
                    cfg.replicas, und, cfg.seed, wall, {"order": order},
                ))
    return rows


def _local_uniqueness(cfg, threads):
    def evaluate(tess, marks):
        res = [local_uniqueness_event(color_and_cluster(tess, p, marks=marks), cfg.R) for p in cfg.ps]
        return {"A": (True, res)}

    return _event_rows(cfg, threads, "local_uniqueness", 3 * cfg.R, evaluate)


def _two_point(cfg, threads):
    pairs = cfg.pairs or _default_pairs(cfg)
    radius = max(max(vertex_distance(cfg.params.root, w) for w in pair) for pair in pairs)
    radius = max(radius, cfg.R)

    def evaluate(tess, marks):
        out = {}
        for u, v in pairs:
            res = [two_point_event(color_and_cluster(tess, p, marks=marks), u, v) for p in cfg.ps]
            out[f"{_format_vertex(u)}~{_format_vertex(v)}"] = (True, res)
        return out

    return _event_rows(cfg, threads, "two_point", radius, evaluate)


def neighbor_complete(tess, R: int) -> bool:
    """Whether all cells meeting ``B_R`` are pairwise adjacent via certified edges."""
    cells = tess.cells_meeting(R)
    if len(cells) < 2:
        return True
    adj = delaunay_adjacency(tess, certified_only=True).as_set()
    need = len(cells) * (len(cells) - 1) // 2
    have = sum((int(a), int(b)) in adj for x, a in enumerate(cells) for b in cells[x + 1:])
    return have == need


def _neighbor_completeness(cfg, threads):
    def evaluate(tess, marks):
        return {"complete": (None, [neighbor_complete(tess, cfg.R)])}

    return _event_rows(cfg, threads, "neighbor_completeness", 2 * cfg.R, evaluate)


def _cell_count(cfg, threads):
    def evaluate(tess, marks):
        return {f"K={cfg.K}": (None, [len(tess.cells_meeting(cfg.R)) > cfg.K])}

    return _event_rows(cfg, threads, "cell_count_geq_K", cfg.R, evaluate)


# ---------------------------------------------------------------------------
# level counts


def theta_ratio_diagnostic(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Mean Bernoulli counts on the spheres of radius ``t_lambda + m``.

    Rows ``t=<t> m=<m>`` carry the mean count with its z-score against
    ``lambda * sphere_size(t + m)``; rows ``t=<t> ratio m=<m>`` carry the ratio of
    adjacent means with the exact prediction
    ``sphere_size(t + m + 1) / sphere_size(t + m)``.
    """
    params = cfg.params
    rows = []
    for lam in cfg.lambdas:
        t = threshold_radius(params, lam)
        if t < 4:
            raise ConfigError(f"threshold radius {t} < 4 at lambda={lam}; choose a smaller lambda", key="lambda")
        radii = [t + m for m in cfg.levels]
        if min(radii) < 0:
            raise ConfigError("levels reach below the root", key="levels")
        window = Window.at_root(params, max(radii), 0)
        dist = window.ball.dist
        t0 = time.perf_counter()

        def one(i, lam=lam):
            nuc = sample_bernoulli_nuclei(window, lam, replica_sequence(cfg.seed, "theta_ratio", lam, i))
            hist = np.bincount(dist[nuc.index], minlength=max(radii) + 1)
            return hist[radii]

        counts = np.array(_map(one, cfg.replicas, threads), dtype=np.float64)
        wall = time.perf_counter() - t0
        n = cfg.replicas
        mean = counts.mean(axis=0)
        sd = counts.std(axis=0, ddof=1) if n > 1 else np.zeros(len(radii))
        se = sd / math.sqrt(n)
        for j, m in enumerate(cfg.levels):
            s = sphere_size(params, t + m)
            expected = lam * s
            exact_se = math.sqrt(s * lam * (1 - lam) / n)
            rows.append(ExperimentResult(
                "theta_ratio", cfg.d, cfg.k, lam, None, cfg.R, f"t={t} m={m}", float(mean[j]), float(se[j]),
                n, 0, cfg.seed, wall,
                {"order": j, "t": t, "expected": expected,
                 "z": float((mean[j] - expected) / exact_se) if exact_se > 0 else 0.0},
            ))
        for j, m in enumerate(cfg.levels[:-1]):
            a, b = mean[j], mean[j + 1]
            cov = np.cov(counts[:, j], counts[:, j + 1])[0, 1] / n if n > 1 else 0.0
            ratio = b / a if a > 0 else float("nan")
            var = (se[j + 1] ** 2 / a ** 2 + b ** 2 * se[j] ** 2 / a ** 4 - 2 * b * cov / a ** 3) if a > 0 else float("nan")
            rows.append(ExperimentResult(
                "theta_ratio", cfg.d, cfg.k, lam, None, cfg.R, f"t={t} ratio m={m}", float(ratio),
                float(math.sqrt(max(var, 0.0))), n, 0, cfg.seed, wall,
                {"order": len(cfg.levels) + j, "t": t,
                 "prediction": sphere_size(params, t + m + 1) / sphere_size(params, t + m),
                 "limit": cfg.d - 1},
            ))
    return rows


# ---------------------------------------------------------------------------
# diagram convergence


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _law(codes: np.ndarray, size: int) -> np.ndarray:
    return np.bincount(codes, minlength=size) / len(codes)


def _finite_codes(cfg, lam, threads):
    def one(i):
        seq = replica_sequence(cfg.seed, "diagram_tv", lam, i)
        tess = certified_window_tessellation(cfg.params, None, cfg.sub_radius, lam, seq, margin=cfg.margin)
        return bond_encoding(tess, cfg.sub_radius).code()

    return np.array(_map(one, cfg.replicas, threads), dtype=np.int64)


def ipvt_codes(cfg: ExperimentConfig, threads: int = 1) -> np.ndarray:
    n = cfg.ipvt_samples or cfg.replicas

    def one(i):
        seq = replica_sequence(cfg.seed, "diagram_tv", None, i)
        seq = np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key + (_IPVT,))
        sample = sample_ipvt(cfg.params, cfg.sub_radius, cfg.theta0, seq)
        return bond_encoding(ideal_tessellation(sample, cfg.sub_radius), cfg.sub_radius).code()

    return np.array(_map(one, n, threads), dtype=np.int64)


def diagram_tv_distance(cfg: ExperimentConfig, threads: int = 1) -> list:
    """TV distance between finite-lambda and ideal laws of the bond encoding on ``B_sub``.

    Standard errors are bootstrap standard deviations; the plug-in TV of two
    empirical laws is biased upward, which is recorded in ``extra``.
    """
    from .tree_graph import product_ball

    num_edges = len(product_ball(cfg.params, cfg.sub_radius).edges(cfg.sub_radius)[0])
    if num_edges > 20:
        raise ConfigError(f"B_{cfg.sub_radius} has {num_edges} edges; at most 20 are supported", key="sub_radius")
    size = 1 << num_edges
    t0 = time.perf_counter()
    ideal = ipvt_codes(cfg, threads)
    q = _law(ideal, size)
    rows = []
    for lam in cfg.lambdas:
        codes = _finite_codes(cfg, lam, threads)
        p = _law(codes, size)
        tv = total_variation(p, q)
        boot_seq = np.random.SeedSequence(cfg.seed, spawn_key=(estimator_tag("diagram_tv"), float_key(lam), _BOOT))
        rng = generator(boot_seq)
        pb = rng.multinomial(len(codes), p, size=cfg.bootstrap) / len(codes)
        qb = rng.multinomial(len(ideal), q, size=cfg.bootstrap) / len(ideal)
        tvs = 0.5 * np.abs(pb - qb).sum(axis=1)
        se = float(tvs.std(ddof=1)) if cfg.bootstrap > 1 else 0.0
        rows.append(ExperimentResult(
            "diagram_tv", cfg.d, cfg.k, lam, None, cfg.sub_radius, f"B_{cfg.sub_radius}", tv, se,
            cfg.replicas, 0, cfg.seed, time.perf_counter() - t0,
            {"ipvt_samples": len(ideal), "theta0": cfg.theta0, "num_edges": num_edges,
             "finite_law": p.tolist(), "ideal_law": q.tolist(),
             "bootstrap_mean": float(tvs.mean()),
             "note": "plug-in TV of empirical laws is biased upward; "
                     "the ideal law assumes the lambda sequence converges to the theta0 limit"},
        ))
    return rows


def ipvt_neighbor_fraction(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Fraction of pairs of ideal cells meeting ``B_inner`` that are adjacent within ``B_L``."""
    Lmax = max(cfg.L)
    n = cfg.ipvt_samples or cfg.replicas
    t0 = time.perf_counter()

    def one(i):
        seq = replica_sequence(cfg.seed, "ipvt_neighbor_fraction", None, i)
        sample = sample_ipvt(cfg.params, Lmax, cfg.theta0, seq)
        tess = ideal_tessellation(sample, Lmax)
        cells = tess.cells_meeting(cfg.inner)
        pairs = [(int(a), int(b)) for x, a in enumerate(cells) for b in cells[x + 1:]]
        out = []
        for L in cfg.L:
            if not pairs:
                out.append(None)
                continue
            adj = delaunay_adjacency(tess, radius=L).as_set()
            out.append(sum(pr in adj for pr in pairs) / len(pairs))
        return out

    fracs = _map(one, n, threads)
    rows = []
    for j, L in enumerate(cfg.L):
        vals = np.array([f[j] for f in fracs if f[j] is not None], dtype=np.float64)
        und = n - len(vals)
        est = float(vals.mean()) if len(vals) else float("nan")
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
        rows.append(ExperimentResult(
            "ipvt_neighbor_fraction", cfg.d, cfg.k, None, None, cfg.inner, f"L={L}", est, se,
            n, und, cfg.seed, time.perf_counter() - t0, {"order": j, "theta0": cfg.theta0},
        ))
    return rows


# ---------------------------------------------------------------------------
# dispatch and output


def estimate_event(cfg: ExperimentConfig, estimator: str | None = None, threads: int = 1) -> list:
    """Estimate one of the window events over the configured grid."""
    name = estimator or cfg.estimator
    table = {
        "local_uniqueness": _local_uniqueness,
        "neighbor_completeness": _neighbor_completeness,
        "cell_count_geq_K": _cell_count,
        "two_point": _two_point,
    }
    if name not in table:
        raise ConfigError(f"unknown event estimator {name!r}; valid: {', '.join(table)}", key="estimator")
    return table[name](cfg, threads)


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Run the configured estimator; rows come back in canonical order."""
    name = cfg.estimator
    if name == "theta_ratio":
        rows = theta_ratio_diagnostic(cfg, threads)
    elif name == "diagram_tv":
        rows = diagram_tv_distance(cfg, threads)
    elif name == "ipvt_neighbor_fraction":
        rows = ipvt_neighbor_fraction(cfg, threads)
    else:
        rows = estimate_event(cfg, name, threads)
    return sorted(rows, key=ExperimentResult.sort_key)


def results_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(r.row())
    return buf.getvalue()


def results_json(cfg: ExperimentConfig, rows, version: str) -> str:
    payload = {
        "version": version,
        "config": cfg.echo(),
        "columns": list(CSV_COLUMNS),
        "results": [dict(zip(CSV_COLUMNS, r.row()), wall_clock=r.wall_clock, extra=r.extra) for r in rows],
    }
    return json.dumps(payload, indent=2, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")
