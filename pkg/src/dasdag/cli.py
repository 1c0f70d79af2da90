"""Command-line entry point.

Subcommands
-----------
generate      sample a graph, an SCM and a dataset, and write them to a directory
discover      run the pipeline on an observations CSV and write a JSON report
eval          compare an estimated graph file against a truth graph file
bench         multi-seed sweep over graph sizes with aggregated metrics and timings
ingest-check  load an external observations/truth pair and summarise it

Exit codes: 0 success, 1 validation error, 2 numerical or runtime error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .edges import DiscoveryParams, discover
from .errors import DasError, ValidationError
from .graph import (
    SID_MAX_D,
    Dag,
    graph_metrics,
    read_graph,
    sample_er,
    sample_sf,
    write_edge_list,
)
from .stein import MEDIAN, SteinConfig
from .synth import DEFAULT_SIGMA_RANGE, LINEAR, NONLINEAR, Dataset, ScmSpec, draw, sample_scm

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

CSV_HEADER = "csv-header"
SYNTREN = "syntren-export"

DATA_FILE = "data.csv"
TRUTH_FILE = "truth.txt"
SCM_FILE = "scm.json"
MANIFEST_FILE = "manifest.json"


@dataclass
class RunConfig:
    """Resolved parameters of a CLI run; round-trips through a JSON file."""

    graph: str = "er"
    d: List[int] = field(default_factory=lambda: [10])
    density: int = 1
    n: int = 1000
    seeds: List[int] = field(default_factory=lambda: [0])
    mode: str = NONLINEAR
    sigma_range: Tuple[float, float] = DEFAULT_SIGMA_RANGE
    K: int = 20
    alpha: float = 0.01
    prune_cutoff: float = 0.001
    standardize: bool = False
    skip_pruning: bool = False
    ridge: float = SteinConfig.ridge
    bandwidth: object = MEDIAN
    workers: int = 1

    def __post_init__(self):
        self.d = [int(v) for v in (self.d if isinstance(self.d, (list, tuple)) else [self.d])]
        self.seeds = [int(s) for s in self.seeds]
        self.sigma_range = tuple(float(s) for s in self.sigma_range)
        if self.graph not in ("er", "sf"):
            raise ValidationError(f"graph must be 'er' or 'sf', got {self.graph!r}")
        if not self.d or min(self.d) < 1:
            raise ValidationError(f"every d must be >= 1, got {self.d}")
        if self.density < 1:
            raise ValidationError(f"density must be >= 1, got {self.density}")
        if self.graph == "sf" and any(self.density >= d for d in self.d if d > 1):
            raise ValidationError(f"scale-free graphs need density < d, got density {self.density} and d {self.d}")
        if self.n < 2:
            raise ValidationError(f"n must be >= 2, got {self.n}")
        if not self.seeds:
            raise ValidationError("seed list is empty")
        if self.mode not in (NONLINEAR, LINEAR):
            raise ValidationError(f"mode must be {NONLINEAR!r} or {LINEAR!r}, got {self.mode!r}")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}")
        self.params()  # range checks live in DiscoveryParams and SteinConfig

    def stein(self) -> SteinConfig:
        bw = self.bandwidth if self.bandwidth == MEDIAN else float(self.bandwidth)
        return SteinConfig(bandwidth=bw, ridge=float(self.ridge))

    def params(self) -> DiscoveryParams:
        return DiscoveryParams(
            K=int(self.K), alpha=float(self.alpha), prune_cutoff=float(self.prune_cutoff), stein=self.stein(),
            standardize=bool(self.standardize), skip_pruning=bool(self.skip_pruning),
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sigma_range"] = list(self.sigma_range)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON config ({exc})") from None
        if not isinstance(obj, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        return cls.from_dict(obj)


# ----------------------------------------------------------------- instances


def make_instance(cfg: RunConfig, d: int, seed: int) -> Tuple[Dag, ScmSpec, Dataset]:
    """Graph, SCM and dataset for one benchmark cell, all from one seed."""
    rng = np.random.default_rng(seed)
    if cfg.graph == "er":
        g = sample_er(d, cfg.density * d, rng)
    else:
        g = sample_sf(d, min(cfg.density, max(d - 1, 1)), rng) if d > 1 else Dag.empty(1)
    scm = sample_scm(g, cfg.mode, cfg.sigma_range, rng)
    meta = {"seed": seed, "graph": cfg.graph, "d": d, "density": cfg.density}
    return g, scm, draw(scm, cfg.n, rng, meta)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


# ------------------------------------------------------------------ commands


def cmd_generate(cfg: RunConfig, out_dir) -> Path:
    if len(cfg.d) != 1 or len(cfg.seeds) != 1:
        raise ValidationError("generate takes exactly one d and one seed")
    d, seed = cfg.d[0], cfg.seeds[0]
    g, scm, ds = make_instance(cfg, d, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # write everything to a scratch directory first so a failure leaves no partial bundle
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        tmp = Path(tmp)
        ds.to_csv(tmp / DATA_FILE)
        write_edge_list(g, tmp / TRUTH_FILE)
        scm.save(tmp / SCM_FILE)
        _write_json(tmp / MANIFEST_FILE, {
            "seed": seed, "config": cfg.to_dict(), "n": ds.n, "d": ds.d, "edges": g.n_edges,
            "files": {"data": DATA_FILE, "truth": TRUTH_FILE, "scm": SCM_FILE},
        })
        for name in (DATA_FILE, TRUTH_FILE, SCM_FILE, MANIFEST_FILE):
            os.replace(tmp / name, out / name)
    return out


def load_observations(path, fmt: str = CSV_HEADER) -> Dataset:
    if fmt == CSV_HEADER:
        return Dataset.from_csv(path)
    if fmt == SYNTREN:
        return _read_syntren_matrix(path)
    raise ValidationError(f"unknown format {fmt!r}")


def _read_syntren_matrix(path) -> Dataset:
    # genes are rows, samples are columns; first field of each row is the gene name
    rows = [ln.rstrip("\n").split("\t") for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(rows) < 2:
        raise ValidationError(f"{path}: expected a header row and at least one gene row")
    n = len(rows[0]) - 1
    genes, values = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != n + 1:
            raise ValidationError(f"{path}: row {lineno} has {len(r) - 1} values, header has {n}")
        genes.append(r[0].strip())
        try:
            vals = [float(x) for x in r[1:]]
        except ValueError as exc:
            raise ValidationError(f"{path}: row {lineno}: {exc}") from None
        bad = [k for k, x in enumerate(vals) if not math.isfinite(x)]
        if bad:
            raise ValidationError(f"{path}: row {lineno} ({genes[-1]!r}), sample {bad[0]}: non-finite value")
        values.append(vals)
    return Dataset(np.asarray(values).T, tuple(genes), {"source": str(path), "format": SYNTREN})


def _read_syntren_network(path, columns: Sequence[str]) -> Dag:
    # one interaction per line: source <tab> type <tab> target
    index = {c: k for k, c in enumerate(columns)}
    adj = np.zeros((len(columns), len(columns)), dtype=bool)
    for lineno, ln in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = ln.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ValidationError(f"{path}: line {lineno}: expected 'source type target'")
        src, _, dst = parts
        for name in (src, dst):
            if name not in index:
                raise ValidationError(f"{path}: line {lineno}: gene {name!r} is not a data column")
        adj[index[src], index[dst]] = True
    return Dag(adj)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_truth(path, columns: Sequence[str]) -> Dag:
    # a two-column CSV of node names is a named edge list; anything else is read by index
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in r] for r in csv.reader(fh) if any(c.strip() for c in r)]
    named = rows and all(len(r) == 2 and not any(_is_number(c) for c in r) for r in rows)
    if not named or len(columns) == 2:
        return read_graph(path, d=len(columns))
    index = {c: k for k, c in enumerate(columns)}
    if rows[0][0] not in index or rows[0][1] not in index:
        rows = rows[1:]  # header such as "cause,effect"
    adj = np.zeros((len(columns), len(columns)), dtype=bool)
    for lineno, (src, dst) in enumerate(rows, start=1):
        for name in (src, dst):
            if name not in index:
                raise ValidationError(f"{path}: edge {lineno}: node {name!r} is not a data column")
        adj[index[src], index[dst]] = True
    return Dag(adj)


def ingest_external(obs_path, truth_path, fmt: str = CSV_HEADER) -> Tuple[Dataset, Dag]:
    """Load observations and a ground-truth graph, checking they agree.

    The truth may be an index edge list, a dense 0/1 CSV (optionally with a
    header row), a two-column CSV of node names, or for ``syntren-export`` a
    ``source type target`` interaction list.
    """
    ds = load_observations(obs_path, fmt)
    if fmt == SYNTREN:
        truth = _read_syntren_network(truth_path, ds.columns)
    else:
        truth = _read_truth(truth_path, ds.columns)
    if truth.d != ds.d:
        raise ValidationError(f"truth has {truth.d} nodes, observations have {ds.d} columns")
    return ds, truth


def cmd_discover(cfg: RunConfig, data_path, truth_path=None, fmt: str = CSV_HEADER, out_path=None) -> dict:
    if truth_path is not None:
        ds, truth = ingest_external(data_path, truth_path, fmt)
    else:
        ds, truth = load_observations(data_path, fmt), None
    try:
        report = discover(ds, cfg.params(), truth)
    except (DasError, ArithmeticError) as exc:
        partial = getattr(exc, "partial_report", None)
        if partial is not None and out_path is not None:
            _write_json(out_path, _report_json(partial, cfg, data_path, truth_path))
        raise
    obj = _report_json(report, cfg, data_path, truth_path)
    if out_path is not None:
        _write_json(out_path, obj)
    return obj


def _report_json(report, cfg: RunConfig, data_path, truth_path) -> dict:
    obj = report.to_dict(include_timings=False)
    obj["run_config"] = cfg.to_dict()
    obj["inputs"] = {"data": str(data_path), "truth": None if truth_path is None else str(truth_path)}
    obj["timings"] = dict(report.timings)
    return obj


def cmd_eval(truth_path, est_path) -> dict:
    truth = read_graph(truth_path)
    est = read_graph(est_path, d=truth.d)
    return graph_metrics(truth, est).as_dict()


# ---------------------------------------------------------------- benchmark

METRICS = ("shd", "sid", "precision", "recall")
STAGES = ("ordering", "selection", "pruning")


def _bench_cell(args):
    cfg, d, seed = args
    row = {"d": d, "seed": seed}
    try:
        g, _, ds = make_instance(cfg, d, seed)
        rep = discover(ds, cfg.params(), g)
        row.update(rep.metrics.as_dict())
        row.update({f"t_{k}": rep.timings.get(k) for k in STAGES})
        row["candidates"] = rep.candidates.n_candidates
        row["candidate_bound"] = int(cfg.K) * d
        row["degeneracy_flag"] = bool(rep.degeneracy_flag)
        row["error"] = None
    except Exception as exc:  # recorded per cell; the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    a = np.asarray(vals, dtype=float)
    return float(a.mean()), float(a.std())


def aggregate(cfg: RunConfig, cells: List[dict]) -> List[dict]:
    """One row per d: mean and population std over the completed seeds."""
    table = []
    variant = f"das-K{cfg.K}-alpha{cfg.alpha:g}" + ("-noprune" if cfg.skip_pruning else "")
    for d in cfg.d:
        done = [c for c in cells if c["d"] == d and c["error"] is None]
        row = {
            "graph": cfg.graph, "d": d, "density": cfg.density, "variant": variant,
            "seeds_completed": len(done), "seeds_failed": sum(1 for c in cells if c["d"] == d and c["error"]),
        }
        for m in METRICS:
            row[f"{m}_mean"], row[f"{m}_std"] = _mean_std([c[m] for c in done])
        for s in STAGES:
            row[f"t_{s}_mean"], _ = _mean_std([c[f"t_{s}"] for c in done])
        row["candidates_max"] = max((c["candidates"] for c in done), default=None)
        row["complete"] = bool(done)
        table.append(row)
    return table


def scaling_exponent(ds: Sequence[float], times: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log(time) against log(d)."""
    pts = [(math.log(d), math.log(t)) for d, t in zip(ds, times) if t is not None and t > 0]
    if len({x for x, _ in pts}) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def cmd_bench(cfg: RunConfig, out_prefix) -> dict:
    jobs = [(cfg, d, s) for d in cfg.d for s in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            cells = list(pool.map(_bench_cell, jobs))
    else:
        cells = [_bench_cell(j) for j in jobs]
    table = aggregate(cfg, cells)
    result = {
        "config": cfg.to_dict(),
        "sid_skipped_above_d": SID_MAX_D,
        "table": table,
        "cells": cells,
        "selection_scaling_exponent": scaling_exponent(
            [r["d"] for r in table], [r["t_selection_mean"] for r in table]
        ),
    }
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_json(prefix.with_suffix(".json"), result)
    with open(prefix.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]))
        w.writeheader()
        for row in table:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return result


def cmd_ingest_check(obs_path, truth_path, fmt: str) -> dict:
    ds, truth = ingest_external(obs_path, truth_path, fmt)
    return {"n": ds.n, "d": ds.d, "edges": truth.n_edges, "columns": list(ds.columns), "format": fmt}


# ------------------------------------------------------------------- parsing

_OVERRIDES = {
    "graph": "graph", "d": "d", "density": "density", "n": "n", "seeds": "seeds", "mode": "mode",
    "k": "K", "alpha": "alpha", "prune_cutoff": "prune_cutoff", "standardize": "standardize",
    "skip_pruning": "skip_pruning", "ridge": "ridge", "bandwidth": "bandwidth", "workers": "workers",
}


def _bandwidth(text: str):
    if text == MEDIAN:
        return MEDIAN
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be 'median' or a number, got {text!r}") from None


def _add_discovery_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("discovery")
    g.add_argument("--k", type=int, default=None, help="candidate parents per node (default 20)")
    g.add_argument("--alpha", type=float, default=None, help="selection threshold (default 0.01)")
    g.add_argument("--prune-cutoff", type=float, default=None, help="pruning threshold (default 0.001)")
    g.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--skip-pruning", action="store_true", default=None)
    g.add_argument("--ridge", type=float, default=None, help="kernel ridge eta (default 1e-3)")
    g.add_argument("--bandwidth", type=_bandwidth, default=None, help="'median' or a fixed value")


def _add_data_flags(p: argparse.ArgumentParser, multi: bool):
    g = p.add_argument_group("data generation")
    g.add_argument("--graph", choices=["er", "sf"], default=None)
    if multi:
        g.add_argument("--d", type=int, nargs="+", default=None, help="node counts")
        g.add_argument("--seeds", type=int, nargs="*", default=None, help="seed list")
    else:
        g.add_argument("--d", type=int, default=None, help="node count (default 10)")
        g.add_argument("--seed", dest="seeds", type=lambda s: [int(s)], default=None)
    g.add_argument("--density", type=int, default=None, help="edges per node, 1 or 4 in the usual regimes")
    g.add_argument("--n", type=int, default=None, help="sample count (default 1000)")
    g.add_argument("--mode", choices=[NONLINEAR, LINEAR], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dasdag", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config; explicit flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample a synthetic dataset bundle")
    _add_data_flags(p, multi=False)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("discover", parents=[common], help="run discovery on an observations file")
    p.add_argument("data", type=Path)
    p.add_argument("--truth", type=Path, help="ground-truth edge list or adjacency CSV")
    p.add_argument("--format", choices=[CSV_HEADER, SYNTREN], default=CSV_HEADER)
    p.add_argument("--out", type=Path, help="report path (default: stdout)")
    _add_discovery_flags(p)

    p = sub.add_parser("eval", help="metrics of an estimated graph against a truth graph")
    p.add_argument("truth", type=Path)
    p.add_argument("estimate", type=Path)

    p = sub.add_parser("bench", parents=[common], help="multi-seed benchmark sweep")
    _add_data_flags(p, multi=True)
    _add_discovery_flags(p)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="output prefix; .csv and .json are written")

    p = sub.add_parser("ingest-check", help="validate an external observations/truth pair")
    p.add_argument("data", type=Path)
    p.add_argument("truth", type=Path)
    p.add_argument("--format", choices=[CSV_HEADER, SYNTREN], default=CSV_HEADER)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if getattr(args, "config", None) else RunConfig().to_dict()
    for flag, key in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            base[key] = val
    return RunConfig.from_dict(base)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval":
            _emit(cmd_eval(args.truth, args.estimate))
            return EXIT_OK
        if args.command == "ingest-check":
            _emit(cmd_ingest_check(args.data, args.truth, args.format))
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "generate":
            out = cmd_generate(cfg, args.out)
            print(f"wrote bundle to {out}")
        elif args.command == "discover":
            obj = cmd_discover(cfg, args.data, args.truth, args.format, args.out)
            if args.out is None:
                _emit(obj)
        elif args.command == "bench":
            res = cmd_bench(cfg, args.out)
            _emit({"table": res["table"], "selection_scaling_exponent": res["selection_scaling_exponent"]})
        return EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DasError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
