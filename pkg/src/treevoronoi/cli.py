"""Command line entry point: ``treevoronoi simulate`` and ``treevoronoi oracle``.

Config files are flat ``key=value`` pairs separated by whitespace or
newlines; ``#`` starts a comment and lists are comma separated::

    estimator=local_uniqueness d=3 k=2
    lambda=0.3,0.03 p=0.8 R=3
    replicas=500 seed=7
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import ConfigError, TreeVoronoiError
from .experiments import (
    ESTIMATORS,
    ExperimentConfig,
    parse_pairs,
    parse_vertex,
    results_csv,
    results_json,
    run_experiment,
)
from .horofunction import default_theta0, level_set_measure
from .tree_graph import TreeParams, ball_size, sphere_size, threshold_radius

log = logging.getLogger("treevoronoi")

LOG_ENV = "IPVT_PERC_LOG"
_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


# config key -> (dataclass field, parser)
_SCHEMA = {
    "d": ("d", int),
    "k": ("k", int),
    "lambda": ("lambdas", _floats),
    "p": ("ps", _floats),
    "R": ("R", int),
    "replicas": ("replicas", int),
    "seed": ("seed", int),
    "theta0": ("theta0", float),
    "estimator": ("estimator", str),
    "out_dir": ("out_dir", str),
    "K": ("K", int),
    "levels": ("levels", _ints),
    "sub_radius": ("sub_radius", int),
    "bootstrap": ("bootstrap", int),
    "ipvt_samples": ("ipvt_samples", int),
    "pairs": ("pairs", str),
    "margin": ("margin", int),
    "L": ("L", _ints),
    "inner": ("inner", int),
}


def load_config(source) -> ExperimentConfig:
    """Parse a config file path or inline ``key=value`` text.

    Defaults: ``theta0 = (d-2)/(d-1)``, ``replicas = 200``.  Errors name the
    offending key and line.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "=" not in source):
        path = Path(source)
        if not path.is_file():
            raise ConfigError(f"config file {str(path)!r} not found")
        text = path.read_text()
    else:
        text = str(source)
    if not text.strip():
        raise ConfigError("config is empty")
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        for token in raw.split("#", 1)[0].split():
            if "=" not in token:
                raise ConfigError(f"expected key=value, got {token!r}", line=lineno)
            key, value = token.split("=", 1)
            if key not in _SCHEMA:
                raise ConfigError(f"unknown key; valid keys: {', '.join(_SCHEMA)}", key=key, line=lineno)
            if key in values:
                raise ConfigError("duplicate key", key=key, line=lineno)
            name, parse = _SCHEMA[key]
            try:
                values[name] = parse(value)
            except ValueError:
                raise ConfigError(f"malformed value {value!r}", key=key, line=lineno) from None
            lines[name] = (key, lineno)
    if "estimator" not in values:
        raise ConfigError("missing required key", key="estimator")
    try:
        k = values.get("k", 2)
        if "pairs" in values:
            values["pairs"] = parse_pairs(values["pairs"], k)
        cfg = ExperimentConfig(**values)
    except ConfigError as err:
        key = err.key
        name = _SCHEMA[key][0] if key in _SCHEMA else key
        line = lines.get(name, (key, None))[1]
        raise ConfigError(err.bare, key=key, line=line) from None
    return cfg


@dataclass
class RunManifest:
    """Record of one completed run; written last as the completion marker."""

    config: dict
    seed: int
    started: str
    finished: str
    files: dict
    version: str
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, default=list)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def run(cfg: ExperimentConfig, threads: int = 1, out_dir: str | None = None) -> RunManifest:
    """Run the experiment and write ``<id>.csv``, ``<id>.json`` and ``<id>.manifest.json``.

    Files carry a ``.partial`` suffix until the whole run succeeds.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_id = f"{cfg.estimator}-seed{cfg.seed}"
    started = _now()
    paths = {
        "csv": out / f"{run_id}.csv",
        "json": out / f"{run_id}.json",
        "manifest": out / f"{run_id}.manifest.json",
    }
    partial = {key: p.with_name(p.name + ".partial") for key, p in paths.items()}
    for p in list(paths.values()) + list(partial.values()):
        if p.exists():
            p.unlink()
    log.info("running %s with %d replicas on %d thread(s)", cfg.estimator, cfg.replicas, threads)
    try:
        rows = run_experiment(cfg, threads=threads)
        partial["csv"].write_text(results_csv(rows))
        partial["json"].write_text(results_json(cfg, rows, __version__))
    except Exception:
        partial["csv"].touch()
        log.error("run %s failed; outputs left with a .partial suffix", run_id)
        raise
    partial["csv"].replace(paths["csv"])
    partial["json"].replace(paths["json"])
    manifest = RunManifest(
        cfg.echo(), cfg.seed, started, _now(),
        {key: str(p) for key, p in paths.items()}, __version__, threads,
    )
    partial["manifest"].write_text(manifest.to_json())
    partial["manifest"].replace(paths["manifest"])
    log.info("wrote %s", paths["csv"])
    return manifest


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treevoronoi", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured experiment")
    sim.add_argument("--config", required=True, help="path to a key=value config file")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--threads", type=int, default=1, help="replicas run in parallel (default 1)")
    sim.add_argument("--out-dir", help="override the config out_dir")

    orc = sub.add_parser("oracle", help="exact reference values")
    osub = orc.add_subparsers(dest="oracle", required=True)
    sph = osub.add_parser("sphere-size", help="number of vertices at distance q from the root")
    sph.add_argument("--d", type=int, required=True)
    sph.add_argument("--k", type=int, required=True)
    sph.add_argument("--q", type=int, required=True)
    sph.add_argument("--ball", action="store_true", help="print the ball size instead")

    thr = osub.add_parser("threshold-radius", help="largest t with |B_t| <= 1/lambda")
    thr.add_argument("--d", type=int, required=True)
    thr.add_argument("--k", type=int, required=True)
    thr.add_argument("--lambda", dest="lam", type=float, required=True)

    lvl = osub.add_parser("level-measure", help="exact mass of a two-point sublevel set")
    lvl.add_argument("--d", type=int, required=True)
    lvl.add_argument("--k", type=int, required=True)
    lvl.add_argument("--v", default="o", help="vertex as words joined by '/', e.g. 0.1/2 (default: root)")
    lvl.add_argument("--m", type=int, required=True)
    lvl.add_argument("--theta0", type=float, help="level-0 intensity (default (d-2)/(d-1))")
    return ap


def _configure_logging():
    name = os.environ.get(LOG_ENV, "warn").lower()
    level = _LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        log.warning("%s=%r is not one of %s; using warn", LOG_ENV, name, ", ".join(_LOG_LEVELS))


def main(argv=None) -> int:
    _configure_logging()
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = load_config(Path(args.config))
            if args.seed is not None:
                cfg = dataclasses.replace(cfg, seed=args.seed)
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            manifest = run(cfg, threads=args.threads, out_dir=args.out_dir)
            print(manifest.files["csv"])
        elif args.oracle == "sphere-size":
            params = TreeParams(args.d, args.k)
            print(ball_size(params, args.q) if args.ball else sphere_size(params, args.q))
        elif args.oracle == "threshold-radius":
            print(threshold_radius(TreeParams(args.d, args.k), args.lam))
        elif args.oracle == "level-measure":
            params = TreeParams(args.d, args.k)
            theta0 = default_theta0(args.d) if args.theta0 is None else args.theta0
            v = parse_vertex(args.v, args.k)
            print(repr(level_set_measure(params, params.root, v, args.m, theta0)))
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        if "estimator" in str(err):
            print(f"valid estimators: {', '.join(ESTIMATORS)}", file=sys.stderr)
        return 2
    except TreeVoronoiError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
