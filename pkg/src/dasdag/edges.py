"""Candidate edge selection from score-Jacobian rows, additive-model pruning,
and the end-to-end discovery pipeline.

For a leaf ``l`` the entry ``d s_l / d x_j`` is identically zero unless ``j`` is
a parent of ``l``. Selection ranks the predecessors of each leaf by the mean of
``|J_lj|``, keeps the ``K + 1`` largest, uses the weakest of them as a
reference and admits every other member whose mean is significantly larger
(one-sided Welch test). No multiple-testing correction is applied.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import BSpline

from .errors import DasError, SingularDesign, ValidationError, ZeroVariancePair
from .graph import Dag, GraphMetrics, as_dag, graph_metrics
from .order import DEGENERACY_THRESHOLD, OrderingResult, linear_degeneracy_diagnostic, score_order
from .stats import f_test_nested, welch_one_sided
from .stein import SteinConfig, _values, stein_hessian_row
from .synth import Dataset

N_BASIS = 8
SPLINE_DEGREE = 3
PRUNE_RIDGE = 1e-8
MULTIPLE_TESTING_NOTE = "no multiple-testing correction is applied to the selection tests"


@dataclass(frozen=True)
class DiscoveryParams:
    """Pipeline parameters.

    Parameters
    ----------
    K : int
        At most ``K`` candidate parents per node.
    alpha : float
        Selection test threshold; an edge is admitted when ``p < alpha``.
    prune_cutoff : float
        Pruning keeps an edge when its F-test p-value is ``<= prune_cutoff``.
    stein : SteinConfig
        Estimator settings shared by ordering and selection.
    standardize : bool
        Rescale every column to zero mean and unit variance first.
    skip_pruning : bool
        Return the candidate graph unpruned.
    """

    K: int = 20
    alpha: float = 0.01
    prune_cutoff: float = 0.001
    stein: SteinConfig = field(default_factory=SteinConfig)
    standardize: bool = False
    skip_pruning: bool = False
    degeneracy_threshold: float = DEGENERACY_THRESHOLD

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError(f"K must be a positive integer, got {self.K}")
        for name in ("alpha", "prune_cutoff"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if self.degeneracy_threshold < 0:
            raise ValidationError(f"degeneracy_threshold must be >= 0, got {self.degeneracy_threshold}")

    def to_dict(self) -> dict:
        return {
            "K": int(self.K),
            "alpha": self.alpha,
            "prune_cutoff": self.prune_cutoff,
            "stein": self.stein.to_dict(),
            "standardize": self.standardize,
            "skip_pruning": self.skip_pruning,
            "degeneracy_threshold": self.degeneracy_threshold,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DiscoveryParams":
        obj = dict(obj)
        if "stein" in obj:
            obj["stein"] = SteinConfig.from_dict(obj["stein"])
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class CandidateGraph:
    """Output of :func:`das_select`.

    Attributes
    ----------
    adjacency : ndarray of bool
        ``adjacency[j, l]`` marks the candidate edge ``j -> l``.
    pvalues : dict
        Welch p-value of every tested pair ``(j, l)``, admitted or not.
    references : dict
        Reference node per leaf, ``None`` when nothing was tested.
    mean_abs : dict
        Per leaf, ``{predecessor: mean |J_lj|}``.
    untested : tuple
        Edges admitted without a test (a leaf with exactly one predecessor).
    zero_variance : tuple
        Tested pairs where both samples were constant.
    """

    adjacency: np.ndarray
    pvalues: Dict[Tuple[int, int], float]
    references: Dict[int, Optional[int]]
    mean_abs: Dict[int, Dict[int, float]]
    untested: Tuple[Tuple[int, int], ...] = ()
    zero_variance: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=bool, copy=True)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_candidates(self) -> int:
        return int(self.adjacency.sum())

    @property
    def n_tests(self) -> int:
        return len(self.pvalues)

    def as_dag(self) -> Dag:
        return Dag(self.adjacency)

    def to_dict(self) -> dict:
        return {
            "edges": [[int(i), int(j)] for i, j in zip(*np.nonzero(self.adjacency))],
            "tests": [
                {"parent": j, "child": l, "p_value": p, "admitted": bool(self.adjacency[j, l])}
                for (j, l), p in sorted(self.pvalues.items())
            ],
            "references": {str(l): r for l, r in sorted(self.references.items())},
            "untested_edges": [list(e) for e in self.untested],
            "zero_variance_pairs": [list(e) for e in self.zero_variance],
        }


def _top_members(means: np.ndarray, k: int) -> np.ndarray:
    # largest means first; equal means keep ascending node order
    return np.argsort(-means, kind="stable")[:k]


def das_select(X, order: OrderingResult, params: DiscoveryParams = DiscoveryParams()) -> CandidateGraph:
    """Select candidate parents leaf by leaf in removal order.

    For each leaf the ``min(K + 1, m)`` predecessors with the largest mean
    ``|J_lj|`` are kept; the one with the smallest mean is the reference and is
    never admitted. Each other member ``j`` is admitted when the one-sided
    Welch test of ``mean|J_lj| > mean|J_l,ref|`` has ``p < alpha``. A leaf with
    a single predecessor has nothing to compare against, so that edge is
    passed on untested and left to pruning.
    """
    v = _values(X)
    d = v.shape[1]
    if order.d != d:
        raise ValidationError(f"ordering covers {order.d} nodes, data has {d} columns")
    A = np.zeros((d, d), dtype=bool)
    pvalues, references, mean_abs = {}, {}, {}
    untested, zero_var = [], []
    removal = order.removal.pi
    for t, leaf in enumerate(removal):
        preds = sorted(removal[t + 1:])
        if not preds:
            references[leaf] = None
            continue
        rows = stein_hessian_row(v, leaf, params.stein, active=sorted(preds + [leaf]))
        labels, entries = rows.off_diagonal()
        absJ = np.abs(entries)
        means = absJ.mean(axis=0)
        mean_abs[leaf] = {int(j): float(m) for j, m in zip(labels, means)}
        if len(labels) == 1:
            A[labels[0], leaf] = True
            untested.append((int(labels[0]), int(leaf)))
            references[leaf] = None
            continue
        top = _top_members(means, min(int(params.K) + 1, len(labels)))
        ref = int(top[np.argmin(means[top])])
        references[leaf] = int(labels[ref])
        for k in top:
            if k == ref:
                continue
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ZeroVariancePair)
                res = welch_one_sided(absJ[:, k], absJ[:, ref])
            if any(issubclass(w.category, ZeroVariancePair) for w in caught):
                zero_var.append((int(labels[k]), int(leaf)))
            pvalues[(int(labels[k]), int(leaf))] = res.p_value
            if res.p_value < params.alpha:
                A[labels[k], leaf] = True
    return CandidateGraph(A, pvalues, references, mean_abs, tuple(untested), tuple(zero_var))


# ------------------------------------------------------------------- pruning


def spline_basis(x: np.ndarray, n_basis: int = N_BASIS, degree: int = SPLINE_DEGREE) -> np.ndarray:
    """Centred cubic B-spline design over the range of ``x``.

    Uniform knots span ``[min x, max x]``. The last basis function is dropped
    since the full set sums to one and would duplicate the intercept. A
    constant ``x`` yields an empty block.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        return np.zeros((x.size, 0))
    inner = np.linspace(lo, hi, n_basis - degree + 1)
    knots = np.concatenate([[lo] * degree, inner, [hi] * degree])
    B = BSpline.design_matrix(np.clip(x, lo, hi), knots, degree).toarray()[:, :-1]
    return B - B.mean(axis=0)


@dataclass
class _PruneLog:
    pvalues: Dict[Tuple[int, int], float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)


def _fit_rss(D: np.ndarray, y: np.ndarray, node: int, log: _PruneLog) -> Tuple[float, int]:
    """Residual sum of squares and model rank of the ridge-stabilised least squares fit."""
    if D.shape[1] == 0:
        return float(y @ y), 0
    G = D.T @ D
    rank = int(np.linalg.matrix_rank(D))
    ridge = PRUNE_RIDGE
    if rank < D.shape[1]:
        ridge = max(PRUNE_RIDGE, 1e-6 * float(np.trace(G)) / D.shape[1])
        msg = f"node {node}: design of {D.shape[1]} columns has rank {rank}; ridge {ridge:.3g} used"
        warnings.warn(msg, SingularDesign, stacklevel=3)
        log.warnings.append(msg)
    G[np.diag_indices_from(G)] += ridge
    beta = np.linalg.solve(G, D.T @ y)
    r = y - D @ beta
    return float(r @ r), rank


def _prune(X, adjacency: np.ndarray, params: DiscoveryParams) -> Tuple[np.ndarray, _PruneLog]:
    v = _values(X)
    n, d = v.shape
    log = _PruneLog()
    keep = np.zeros((d, d), dtype=bool)
    for node in range(d):
        parents = np.flatnonzero(adjacency[:, node])
        if parents.size == 0:
            continue
        y = v[:, node] - v[:, node].mean()
        blocks = [spline_basis(v[:, p]) for p in parents]
        rss_full, rank_full = _fit_rss(np.hstack(blocks), y, node, log)
        df_full = n - 1 - rank_full
        if df_full <= 0:
            raise ValidationError(f"node {node}: {n} samples are too few for {rank_full} basis columns")
        for k, p in enumerate(parents):
            if blocks[k].shape[1] == 0:
                log.pvalues[(int(p), node)] = 1.0
                continue
            rest = [b for i, b in enumerate(blocks) if i != k]
            D = np.hstack(rest) if rest else np.zeros((n, 0))
            rss_red, rank_red = _fit_rss(D, y, node, log)
            if rank_red >= rank_full:
                pv = 1.0
            else:
                pv = f_test_nested(rss_full, df_full, max(rss_red, rss_full), n - 1 - rank_red)
            log.pvalues[(int(p), node)] = pv
            keep[p, node] = pv <= params.prune_cutoff
    return keep, log


def cam_prune(X, cand, params: DiscoveryParams = DiscoveryParams()) -> Dag:
    """Keep candidate edges whose parent is significant in an additive fit.

    Each node is regressed on spline expansions of all its candidate parents;
    a parent survives when dropping its basis group gives an F-test p-value
    ``<= prune_cutoff``.
    """
    adjacency = cand.adjacency if isinstance(cand, CandidateGraph) else as_dag(cand).adj
    keep, _ = _prune(X, adjacency, params)
    return Dag(keep)


# ------------------------------------------------------------------ pipeline


@dataclass(frozen=True, eq=False)
class DiscoveryReport:
    """Everything produced by one :func:`discover` run.

    ``timings`` is kept apart from the deterministic content so that two runs
    on identical inputs serialise identically apart from that section.
    """

    params: DiscoveryParams
    columns: Tuple[str, ...]
    ordering: Optional[OrderingResult]
    candidates: Optional[CandidateGraph]
    dag: Optional[Dag]
    metrics: Optional[GraphMetrics]
    timings: Dict[str, float]
    warnings: Tuple[str, ...]
    degeneracy_flag: Optional[bool]
    prune_pvalues: Dict[Tuple[int, int], float] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.error is None

    @property
    def counters(self) -> dict:
        d = len(self.columns)
        c = self.candidates
        return {
            "d": d,
            "candidate_edges": None if c is None else c.n_candidates,
            "candidate_bound": int(self.params.K) * d,
            "selection_tests": None if c is None else c.n_tests,
            "final_edges": None if self.dag is None else self.dag.n_edges,
        }

    def to_dict(self, include_timings: bool = True) -> dict:
        out = {
            "config": self.params.to_dict(),
            "columns": list(self.columns),
            "ordering": None if self.ordering is None else self.ordering.to_dict(),
            "degeneracy": {
                "flag": self.degeneracy_flag,
                "ratio": None if self.ordering is None else self.ordering.degeneracy_ratio,
                "threshold": self.params.degeneracy_threshold,
            },
            "candidates": None if self.candidates is None else self.candidates.to_dict(),
            "final_edges": None if self.dag is None else [list(e) for e in self.dag.edges()],
            "prune_pvalues": [
                {"parent": j, "child": l, "p_value": p} for (j, l), p in sorted(self.prune_pvalues.items())
            ],
            "metrics": None if self.metrics is None else self.metrics.as_dict(),
            "counters": self.counters,
            "notes": [MULTIPLE_TESTING_NOTE],
            "warnings": list(self.warnings),
            "error": self.error,
        }
        if include_timings:
            out["timings"] = dict(self.timings)
        return out


def discover(X, params: DiscoveryParams = DiscoveryParams(), truth=None) -> DiscoveryReport:
    """Order, select candidates, prune, and score against ``truth`` if given.

    On failure the raised exception carries the report built so far as its
    ``partial_report`` attribute.
    """
    ds = X if isinstance(X, Dataset) else Dataset(_values(X))
    if params.standardize:
        ds = ds.standardize()
    truth_dag = None if truth is None else as_dag(truth)
    state = dict(
        params=params, columns=ds.columns, ordering=None, candidates=None, dag=None, metrics=None,
        timings={}, warnings=[], degeneracy_flag=None, prune_pvalues={},
    )

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        finally:
            state["timings"][name] = time.perf_counter() - t0

    try:
        if truth_dag is not None and truth_dag.d != ds.d:
            raise ValidationError(f"truth has {truth_dag.d} nodes, data has {ds.d} columns")
        state["ordering"] = stage("ordering", lambda: score_order(ds, params.stein))
        flag = linear_degeneracy_diagnostic(state["ordering"], params.degeneracy_threshold)
        state["degeneracy_flag"] = flag
        if flag:
            state["warnings"].append(
                f"diagonal variance ratio {state['ordering'].degeneracy_ratio:.3g} is below "
                f"{params.degeneracy_threshold:g}; the data may be close to linear and the ordering unidentifiable"
            )
        cand = stage("selection", lambda: das_select(ds, state["ordering"], params))
        state["candidates"] = cand
        for j, l in cand.zero_variance:
            state["warnings"].append(f"zero-variance test pair {j}->{l}: p-value set by convention")
        if params.skip_pruning:
            state["timings"]["pruning"] = 0.0
            state["dag"] = cand.as_dag()
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SingularDesign)
                keep, log = stage("pruning", lambda: _prune(ds, cand.adjacency, params))
            state["dag"] = Dag(keep)
            state["prune_pvalues"] = log.pvalues
            state["warnings"].extend(log.warnings)
        if truth_dag is not None:
            state["metrics"] = graph_metrics(truth_dag, state["dag"])
    except (DasError, ArithmeticError, ValueError) as exc:
        state["error"] = f"{type(exc).__name__}: {exc}"
        state["warnings"] = tuple(state["warnings"])
        exc.partial_report = DiscoveryReport(**state)
        raise
    state["warnings"] = tuple(state["warnings"])
    return DiscoveryReport(**state)
