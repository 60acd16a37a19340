"""Config-driven experiments: resolve ids, sample points, write CSV reports and a manifest.

A config is a TOML document (numbers are read as decimals):

.. code-block:: toml

    experiment = "backward"      # backward | forward | boundary | tiling | markov
    system = "bernoulli:2"
    points = 10
    seed = 9
    out = "results/backward.csv"

    [observable]
    kind = "indicator"
    symbol = 0

    [trees]
    kind = "complete"            # complete | ball | random | explicit
    n_max = 20

Every point gets its own sub-seed, derived from the master seed and the point
index, so reports do not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .averaging import (
    boundary_forward_average,
    cesaro_backward,
    forward_ball_report,
    forward_group_average,
    forward_group_mass,
    tree_sweep_backward,
)
from .errors import ConfigError, InsufficientDepth
from .markov import (
    MarkovChain,
    expected_return_time,
    finfty_chain,
    two_state_chain,
    uniform_free_chain,
)
from .systems import (
    BoundarySystem,
    Constant,
    GaussSystem,
    Observable,
    SkewProductSystem,
    SymbolicPoint,
    System,
    bernoulli_system,
    block_chain_system,
    boundary_system,
    circle_rotation_action,
    cos2pi,
    first_symbol_values,
    gauss_identity,
    gauss_system,
    indicator,
    markov_shift_system,
    skew_product_system,
)
from .tiling import TileAssignment, greedy_tile, tile_heights, tile_scale
from .words import Alphabet, RightRootedTree, complete_tree, random_tree

CSV_VERSION = "ergotree-csv/1"
EXPERIMENTS = ("backward", "forward", "boundary", "tiling", "markov")

CATALOG_SYSTEMS = (
    "bernoulli:2",
    "bernoulli:3",
    "markov:two_state",
    "boundary:r=2:uniform",
    "boundary:r=3:uniform",
    "boundary:r=inf:finfty_chain",
    "gauss:M=50",
    "skew:rotation:r=2",
    "blocks",
)
CATALOG_CHAINS = ("two_state", "finfty_chain", "uniform_free:r=<n>")
CATALOG_OBSERVABLES = (
    "indicator:<symbol>",
    "cylinder:<v0>,<v1>,...",
    "constant:<c>",
    "identity",
    "cos2pi",
)

# -- resolution ---------------------------------------------------------------


def resolve_chain(name: str) -> MarkovChain:
    if name == "two_state":
        return two_state_chain()
    if name in ("finfty_chain", "finfty"):
        return finfty_chain()
    m = re.fullmatch(r"uniform_free:r=(\d+)", name)
    if m:
        return uniform_free_chain(int(m.group(1)))
    raise ConfigError(f"unknown chain {name!r}")


def resolve_system(system_id: str, truncation: dict | None = None) -> System:
    """Build a catalog system from its string id."""
    truncation = truncation or {}
    if system_id == "blocks":
        return block_chain_system()
    m = re.fullmatch(r"bernoulli:(\d+)", system_id)
    if m:
        return bernoulli_system(int(m.group(1)))
    m = re.fullmatch(r"markov:(.+)", system_id)
    if m:
        return markov_shift_system(resolve_chain(m.group(1)), system_id)
    m = re.fullmatch(r"boundary:r=(\d+|inf):(.+)", system_id)
    if m:
        r, chain = m.groups()
        if r == "inf":
            if chain not in ("finfty_chain", "finfty"):
                raise ConfigError("the countable-rank boundary only supports finfty_chain")
            return boundary_system(math.inf, budget=int(truncation.get("finfty_budget", 20)))
        if chain == "uniform":
            return boundary_system(int(r))
        return boundary_system(int(r), resolve_chain(chain))
    m = re.fullmatch(r"gauss:M=(\d+)", system_id)
    if m:
        return gauss_system(int(m.group(1)))
    m = re.fullmatch(r"skew:rotation:r=(\d+)", system_id)
    if m:
        return skew_product_system(circle_rotation_action(int(m.group(1))))
    raise ConfigError(f"unknown system id {system_id!r}")


def parse_observable(spec, system: System | None = None) -> Observable:
    """Observable from a config table or a short string such as ``indicator:0``."""
    if spec is None:
        if isinstance(system, GaussSystem):
            return gauss_identity()
        if isinstance(system, SkewProductSystem):
            return cos2pi()
        return indicator(0)
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        spec = {"kind": kind}
        if kind == "indicator":
            spec["symbol"] = arg or "0"
        elif kind == "cylinder":
            spec["values"] = arg.split(",")
        elif kind == "constant":
            spec["value"] = arg or "1"
    kind = spec.get("kind")
    try:
        if kind == "indicator":
            return indicator(int(spec.get("symbol", 0)))
        if kind == "cylinder":
            values = [float(v) for v in spec["values"]]
            if system is not None and len(values) != system.alphabet.size:
                raise ConfigError(f"cylinder needs one value per symbol ({system.alphabet.size}), got {len(values)}")
            return first_symbol_values(values)
        if kind == "constant":
            return Constant(float(spec.get("value", 1)))
        if kind == "identity":
            return gauss_identity()
        if kind == "cos2pi":
            return cos2pi()
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad observable spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown observable kind {kind!r}")


def parse_assignment(spec, alphabet: Alphabet) -> TileAssignment:
    """Tile rules: ``constant:<h>`` or ``first_symbol:<h0>,<h1>,...`` (complete trees)."""
    if isinstance(spec, dict):
        spec = f"{spec.get('kind', 'constant')}:{spec.get('heights', spec.get('height', 2))}"
        spec = spec.replace("[", "").replace("]", "").replace(" ", "")
    kind, _, arg = str(spec).partition(":")
    try:
        heights = [int(h) for h in arg.split(",")] if arg else [2]
    except ValueError as exc:
        raise ConfigError(f"bad tile heights in {spec!r}") from exc
    if kind == "constant":
        return TileAssignment.constant(complete_tree(alphabet, heights[0]))
    if kind == "first_symbol":
        if len(heights) != alphabet.size:
            raise ConfigError(f"first_symbol needs {alphabet.size} heights")
        return TileAssignment.by_first_symbol([complete_tree(alphabet, h) for h in heights])
    raise ConfigError(f"unknown tile assignment {kind!r}")


# -- configs ------------------------------------------------------------------


def _plain(value):
    """Decimals from the config become ints or floats."""
    if isinstance(value, Decimal):
        return int(value) if value == value.to_integral_value() and "." not in str(value) else float(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh, parse_float=Decimal)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return _plain(raw)


DEFAULT_SYSTEMS = {
    "backward": "bernoulli:2",
    "forward": "skew:rotation:r=2",
    "boundary": "boundary:r=2:uniform",
    "tiling": "bernoulli:2",
}


@dataclass
class ExperimentConfig:
    experiment: str
    system: str | None = None
    observable: Any = None
    trees: dict = field(default_factory=lambda: {"kind": "complete", "n_max": 10})
    points: int = 10
    seed: int = 0
    out: str = "results"
    workers: int | None = None
    point_depth: int | None = None
    truncation: dict = field(default_factory=dict)
    tiling: dict = field(default_factory=dict)
    markov: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = _plain(dict(raw))
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment' entry")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.experiment == "markov-analyze":
            self.experiment = "markov"
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.experiment != "markov":
            self.system = self.system or DEFAULT_SYSTEMS[self.experiment]
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if not isinstance(self.points, int) or self.points < 1:
            raise ConfigError("points must be a positive integer")
        if int(self.trees.get("n_max", 0)) < 0:
            raise ConfigError("n_max must be non-negative")
        if self.trees.get("kind", "complete") not in ("complete", "ball", "random", "explicit"):
            raise ConfigError(f"unknown tree kind {self.trees.get('kind')!r}")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def point_seed(master: int, index: int) -> int:
    """Counter-mode sub-seed of point ``index``."""
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


# -- per-point work ---------------------------------------------------------


def _tree_family(cfg: ExperimentConfig, alphabet: Alphabet) -> list[tuple[str, RightRootedTree]]:
    spec = cfg.trees
    kind = spec.get("kind", "complete")
    reduced = bool(spec.get("reduced", alphabet.involution))
    if kind == "random":
        count = int(spec.get("count", 10))
        seed = int(spec.get("seed", cfg.seed))
        height = int(spec.get("max_height", 5))
        size = int(spec.get("size", 20))
        return [
            (f"random:{j}", random_tree(alphabet, height, size, point_seed(seed, j), reduced=reduced))
            for j in range(count)
        ]
    if kind == "explicit":
        words = [tuple(w) for w in spec.get("words", [])]
        try:
            return [("explicit", RightRootedTree(words + [()], alphabet))]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"tree kind {kind!r} is not a family")


def _sample_depth(cfg: ExperimentConfig, obs: Observable) -> int:
    if cfg.point_depth is not None:
        return int(cfg.point_depth)
    spec = cfg.trees
    height = int(spec.get("n_max", spec.get("max_height", 0)))
    return max(1, height + obs.depth)


def _sample(system: System, cfg: ExperimentConfig, obs: Observable, seed: int):
    rng = np.random.default_rng(seed)
    depth = _sample_depth(cfg, obs)
    if isinstance(system, SkewProductSystem) and cfg.experiment == "forward":
        return float(system.action.sample_base(rng, 1)[0])
    point = system.sample_point(rng, depth)
    if isinstance(point, SymbolicPoint):
        point = SymbolicPoint(point.prefix, seed)
    return point


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _point_rows(cfg_dict: dict, index: int) -> list[list]:
    """All CSV rows for one point; runs in worker processes."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    system = resolve_system(cfg.system, cfg.truncation)
    obs = parse_observable(cfg.observable, system)
    seed = point_seed(cfg.seed, index)
    x = _sample(system, cfg, obs, seed)
    kind = cfg.trees.get("kind", "complete")
    try:
        if cfg.experiment == "tiling":
            return _tiling_rows(cfg, system, x, index, seed)
        if cfg.experiment == "forward":
            if not isinstance(system, SkewProductSystem):
                raise ConfigError("forward experiments need a skew:rotation system")
            if kind in ("complete", "ball"):
                report = forward_ball_report(system, obs, int(cfg.trees.get("n_max", 10)), x)
            else:
                rows = []
                for label, tree in _tree_family(cfg, system.alphabet):
                    avg = forward_group_average(system, obs, tree, x)
                    rows.append([index, label, forward_group_mass(system, tree), avg, obs.integral, seed, 0.0])
                return [_with_error(r) for r in rows]
        elif cfg.experiment == "boundary":
            if not isinstance(system, BoundarySystem):
                raise ConfigError("boundary experiments need a boundary:... system")
            if kind in ("complete", "ball"):
                report = cesaro_backward(system, obs, int(cfg.trees.get("n_max", 10)), x)
            else:
                rows = []
                target = system.invariant_target(obs, x)
                for label, tree in _tree_family(cfg, system.alphabet):
                    ev = boundary_forward_average(system, obs, tree, x)
                    rows.append([index, label, ev.total_weight, ev.average, target, seed, ev.truncation_tail])
                return [_with_error(r) for r in rows]
        else:
            if kind in ("complete", "ball"):
                beam = cfg.truncation.get("beam")
                report = cesaro_backward(system, obs, int(cfg.trees.get("n_max", 10)), x, beam=beam)
            else:
                trees = _tree_family(cfg, system.alphabet)
                report = tree_sweep_backward(system, obs, [t for _, t in trees], x, [lab for lab, _ in trees])
    except InsufficientDepth as exc:
        raise InsufficientDepth(
            f"point {index} (seed {seed}): {exc}", required=exc.required, available=exc.available
        ) from exc
    return [
        _with_error([index, r.index, r.total_weight, r.average, r.target, seed, r.truncation_tail])
        for r in report.rows
    ]


def _with_error(row):
    idx, label, weight, avg, target, seed, tail = row
    err = None if target is None else abs(avg - target)
    return [idx, label, weight, avg, target, err, seed, tail]


def _tiling_rows(cfg, system, x, index, seed):
    if not hasattr(system, "head"):
        raise ConfigError(f"{cfg.system} does not support tiling")
    spec = cfg.tiling
    assignment = parse_assignment(spec.get("assignment", "constant:2"), system.alphabet)
    mode = spec.get("mode", "auto")
    band = spec.get("band")
    Ns = spec.get("N", 8)
    Ns = Ns if isinstance(Ns, list) else [Ns]
    results = [greedy_tile(system, assignment, int(N), x, mode=mode, band=band) for N in Ns]
    return [[index, r.N, r.coverage, r.band_fraction, r.overflow_fraction, seed] for r in results]


# -- run --------------------------------------------------------------------

HEADERS = {
    "curve": ["point_id", "n", "total_weight", "average", "target", "abs_error", "point_seed", "truncation_tail"],
    "family": ["point_id", "tree", "total_weight", "average", "target", "abs_error", "point_seed", "truncation_tail"],
    "tiling": ["point_id", "N", "coverage", "untiled_band", "untiled_overflow", "point_seed"],
}


@dataclass
class RunManifest:
    config: dict
    version: str
    outputs: list[str]
    point_seeds: list[int]
    wall_clock_seconds: float
    truncation: dict

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True, default=str)


def _output_paths(cfg: ExperimentConfig) -> tuple[Path, Path]:
    out = Path(cfg.out)
    csv_path = out if out.suffix == ".csv" else out / f"{cfg.experiment}.csv"
    return csv_path, csv_path.with_suffix(".manifest.json")


def _write_csv(path: Path, header: list[str], rows: list[list], comment: str) -> None:
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION} {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue().encode())


def _tiling_scale(cfg: ExperimentConfig, system: System, obs: Observable) -> dict:
    """Pick (L, N) once from the tile heights of all sampled points."""
    spec = cfg.tiling
    assignment = parse_assignment(spec.get("assignment", "constant:2"), system.alphabet)
    points = [_sample(system, cfg, obs, point_seed(cfg.seed, i)) for i in range(cfg.points)]
    try:
        L, N = tile_scale(tile_heights(system, assignment, points), float(spec["epsilon"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return {"epsilon": float(spec["epsilon"]), "L": L, "N": N}


def _map_points(cfg: ExperimentConfig, workers: int, overrides: dict | None = None) -> list[list]:
    payload = cfg.as_dict()
    if overrides:
        payload["tiling"] = {k: v for k, v in payload["tiling"].items() if k != "epsilon"}
        payload["tiling"].update(N=overrides["N"], band=overrides["L"])
    indices = range(cfg.points)
    if workers <= 1:
        chunks = [_point_rows(payload, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_point_rows, [payload] * cfg.points, indices))
    return [row for chunk in chunks for row in chunk]


def _markov_rows(cfg: ExperimentConfig) -> tuple[list[str], list[list], dict]:
    spec = cfg.markov
    chain = resolve_chain(str(spec.get("chain", "finfty_chain")))
    state = int(spec.get("state", 0))
    depth = int(spec.get("survival_depth", 8))
    stats = expected_return_time(
        chain,
        state,
        max_horizon=int(spec.get("max_horizon", 10_000)),
        sample_count=int(spec.get("samples", 100_000)),
        rng_seed=cfg.seed,
        survival_depth=depth,
    )
    header = ["state", "samples", "mean_return", "censored_fraction"] + [f"survival_{k}" for k in range(1, depth + 1)]
    row = [state, stats.samples, stats.mean_return, stats.censored_fraction] + [
        float(stats.survival[k]) for k in range(1, depth + 1)
    ]
    extra = {"std_error": stats.std_error, "censored": stats.censored}
    return header, [row], extra


def run(config: dict | ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Execute one experiment and write its CSV and manifest."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    workers = workers or cfg.workers or os.cpu_count() or 1
    started = time.perf_counter()
    csv_path, manifest_path = _output_paths(cfg)
    truncation: dict = {}
    if cfg.experiment == "markov":
        header, rows, truncation = _markov_rows(cfg)
        seeds = [cfg.seed]
        comment = f"experiment=markov chain={cfg.markov.get('chain', 'finfty_chain')} seed={cfg.seed}"
    else:
        system = resolve_system(cfg.system, cfg.truncation)
        obs = parse_observable(cfg.observable, system)
        if cfg.experiment == "tiling" and "epsilon" in cfg.tiling:
            truncation = _tiling_scale(cfg, system, obs)
        rows = _map_points(cfg, workers, truncation or None)
        seeds = [point_seed(cfg.seed, i) for i in range(cfg.points)]
        if cfg.experiment == "tiling":
            header = HEADERS["tiling"]
        else:
            family = cfg.trees.get("kind", "complete") in ("random", "explicit")
            header = HEADERS["family" if family else "curve"]
            tails = [r[-1] for r in rows]
            truncation = {"max_truncation_tail": max(tails) if tails else 0.0}
            if isinstance(system, BoundarySystem) and not system.finite_branching:
                truncation["budget_excess_bound"] = system.budget_excess_bound(_sample_depth(cfg, obs))
            if isinstance(system, GaussSystem):
                truncation["branch_cap"] = system.M
        comment = f"experiment={cfg.experiment} system={cfg.system} observable={obs.name} seed={cfg.seed}"
    _write_csv(csv_path, header, rows, comment)
    manifest = RunManifest(
        config=cfg.as_dict(),
        version=__version__,
        outputs=[str(csv_path)],
        point_seeds=seeds,
        wall_clock_seconds=time.perf_counter() - started,
        truncation=truncation,
    )
    manifest_path.write_text(manifest.to_json() + "\n")
    return manifest


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Header and rows of a report, skipping the version comment."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return reader.fieldnames, list(reader)
