"""DAG container, random graph generators, orderings and structure metrics."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .errors import CycleDetected, DimensionMismatch, ValidationError

SOURCE_FIRST = "source-first"
LEAF_FIRST = "leaf-first"


def _toposort_or_none(adj: np.ndarray) -> Optional[list]:
    d = adj.shape[0]
    indeg = adj.sum(axis=0).astype(np.int64)
    heap = [i for i in range(d) if indeg[i] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        v = heapq.heappop(heap)
        out.append(v)
        for c in np.flatnonzero(adj[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, int(c))
    return out if len(out) == d else None


@dataclass(frozen=True, eq=False)
class Dag:
    """Directed acyclic graph stored as a read-only boolean adjacency matrix.

    ``adj[i, j]`` is True iff there is an edge ``i -> j``. Construction fails
    with :class:`CycleDetected` if the matrix has a directed cycle or a
    self-loop.
    """

    adj: np.ndarray

    def __post_init__(self):
        a = np.array(self.adj, dtype=bool, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError(f"adjacency must be square, got shape {a.shape}")
        if np.any(np.diag(a)):
            raise CycleDetected("adjacency has a self-loop")
        if _toposort_or_none(a) is None:
            raise CycleDetected("adjacency contains a directed cycle")
        a.setflags(write=False)
        object.__setattr__(self, "adj", a)

    @classmethod
    def empty(cls, d: int) -> "Dag":
        return cls(np.zeros((d, d), dtype=bool))

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[Tuple[int, int]]) -> "Dag":
        a = np.zeros((d, d), dtype=bool)
        for i, j in edges:
            if not (0 <= i < d and 0 <= j < d):
                raise ValidationError(f"edge ({i}, {j}) out of range for d={d}")
            a[i, j] = True
        return cls(a)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adj.sum())

    def edges(self) -> list:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adj))]

    def parents(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adj[:, j])

    def children(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adj[i])

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(~self.adj.any(axis=1))

    def issubgraph(self, other: "Dag") -> bool:
        _check_same_d(self, other)
        return not np.any(self.adj & ~other.adj)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return self.adj.shape == other.adj.shape and bool(np.array_equal(self.adj, other.adj))

    def __hash__(self):
        return hash((self.d, self.adj.tobytes()))

    def __repr__(self):
        return f"Dag(d={self.d}, edges={self.edges()})"


@dataclass(frozen=True)
class Ordering:
    """A permutation of node ids.

    ``pi[p]`` is the node at position ``p``. With the ``source-first``
    convention position 0 holds a source and every edge points to a later
    position; ``leaf-first`` is the reverse.
    """

    pi: Tuple[int, ...]
    convention: str = SOURCE_FIRST

    def __post_init__(self):
        pi = tuple(int(v) for v in self.pi)
        if sorted(pi) != list(range(len(pi))):
            raise ValidationError(f"ordering is not a permutation of 0..{len(pi) - 1}: {pi}")
        if self.convention not in (SOURCE_FIRST, LEAF_FIRST):
            raise ValidationError(f"unknown ordering convention {self.convention!r}")
        object.__setattr__(self, "pi", pi)

    def __len__(self):
        return len(self.pi)

    def source_first(self) -> "Ordering":
        if self.convention == SOURCE_FIRST:
            return self
        return Ordering(tuple(reversed(self.pi)), SOURCE_FIRST)

    def positions(self) -> np.ndarray:
        """Source-first position of every node."""
        pos = np.empty(len(self.pi), dtype=np.int64)
        pos[list(self.source_first().pi)] = np.arange(len(self.pi))
        return pos

    def violations(self, g: Dag) -> int:
        """Number of edges of ``g`` that point backwards in this ordering."""
        pos = self.positions()
        i, j = np.nonzero(g.adj)
        return int(np.sum(pos[i] > pos[j]))


@dataclass(frozen=True)
class GraphMetrics:
    """Structure-recovery metrics of an estimate against a ground truth.

    ``fp``/``fn`` count edges absent from the other graph in both
    orientations and ``reversed`` counts estimated edges whose reverse is in
    the truth, so ``shd = fp + fn + reversed``. Precision and recall are over
    directed edges: a reversed edge is a wrong prediction and a missed edge.
    """

    shd: int
    sid: Optional[int]
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    reversed: int

    def as_dict(self) -> dict:
        return {
            "shd": self.shd,
            "sid": self.sid,
            "precision": self.precision,
            "recall": self.recall,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "reversed": self.reversed,
        }


DagLike = Union[Dag, np.ndarray, Sequence[Sequence[int]]]


def as_dag(g: DagLike) -> Dag:
    return g if isinstance(g, Dag) else Dag(np.asarray(g))


def _check_same_d(a: Dag, b: Dag):
    if a.d != b.d:
        raise DimensionMismatch(f"graphs have different node counts: {a.d} vs {b.d}")


# ---------------------------------------------------------------- generators


def sample_er(d: int, expected_edges: int, rng: np.random.Generator) -> Dag:
    """Erdos-Renyi DAG: random node order, forward pairs kept independently.

    Each of the ``C(d, 2)`` forward pairs is kept with probability
    ``expected_edges / C(d, 2)`` (clamped to 1).
    """
    if d < 1:
        raise ValidationError(f"d must be >= 1, got {d}")
    if expected_edges < 0:
        raise ValidationError(f"expected_edges must be >= 0, got {expected_edges}")
    n_pairs = comb(d, 2)
    p = min(1.0, expected_edges / n_pairs) if n_pairs else 0.0
    perm = rng.permutation(d)
    keep = np.triu(rng.random((d, d)) < p, k=1)
    adj = np.zeros((d, d), dtype=bool)
    adj[np.ix_(perm, perm)] = keep
    return Dag(adj)


def sample_sf(d: int, edges_per_node: int, rng: np.random.Generator) -> Dag:
    """Scale-free DAG by preferential attachment, edges oriented old -> new.

    Node ``i`` (added in index order) picks ``min(edges_per_node, i)``
    distinct parents among nodes ``0..i-1`` with probability proportional to
    their current degree plus one.
    """
    if d < 1:
        raise ValidationError(f"d must be >= 1, got {d}")
    if d > 1 and not 1 <= edges_per_node < d:
        raise ValidationError(f"need 1 <= edges_per_node < d, got {edges_per_node} with d={d}")
    adj = np.zeros((d, d), dtype=bool)
    degree = np.zeros(d, dtype=np.float64)
    for i in range(1, d):
        k = min(edges_per_node, i)
        w = degree[:i] + 1.0
        parents = rng.choice(i, size=k, replace=False, p=w / w.sum())
        adj[parents, i] = True
        degree[parents] += 1
        degree[i] += k
    return Dag(adj)


def sf_edge_count(d: int, edges_per_node: int) -> int:
    return sum(min(edges_per_node, i) for i in range(1, d))


# ------------------------------------------------------------------ ordering


def topological_sort(g: DagLike) -> Ordering:
    """Source-first topological order; ties go to the smallest node id."""
    adj = g.adj if isinstance(g, Dag) else np.asarray(g, dtype=bool)
    out = _toposort_or_none(adj)
    if out is None or np.any(np.diag(adj)):
        raise CycleDetected("adjacency contains a directed cycle")
    return Ordering(tuple(out), SOURCE_FIRST)


def full_dag_from_order(o: Ordering) -> Dag:
    """Dense DAG with an edge from every node to every later node."""
    pos = o.positions()
    return Dag(pos[:, None] < pos[None, :])


# ------------------------------------------------------------------- metrics


def _edge_counts(truth: Dag, est: Dag):
    _check_same_d(truth, est)
    T, E = truth.adj, est.adj
    tp = int(np.sum(E & T))
    rev = int(np.sum(E & T.T & ~T))
    fp = int(np.sum(E & ~T & ~T.T))
    fn = int(np.sum(T & ~E & ~E.T))
    return tp, fp, fn, rev


def shd(truth: DagLike, est: DagLike) -> int:
    """Structural Hamming distance; a reversed edge counts once."""
    _, fp, fn, rev = _edge_counts(as_dag(truth), as_dag(est))
    return fp + fn + rev


def precision_recall(truth: DagLike, est: DagLike) -> Tuple[float, float]:
    truth, est = as_dag(truth), as_dag(est)
    tp, _, _, _ = _edge_counts(truth, est)
    n_est, n_true = est.n_edges, truth.n_edges
    precision = tp / n_est if n_est else 1.0
    recall = tp / n_true if n_true else 1.0
    return precision, recall


def sid(truth: DagLike, est: DagLike) -> int:
    """Structural intervention distance.

    Counts ordered pairs ``(i, j)`` for which adjusting for the parents of
    ``i`` in ``est`` does not give ``p(x_j | do(x_i))`` in ``truth``.
    """
    truth, est = as_dag(truth), as_dag(est)
    _check_same_d(truth, est)
    return int(_kernels.sid_matrix(truth.adj, est.adj).sum())


SID_MAX_D = 200


def graph_metrics(truth: DagLike, est: DagLike, with_sid: Optional[bool] = None) -> GraphMetrics:
    """All metrics at once; SID is skipped above ``SID_MAX_D`` nodes unless forced."""
    truth, est = as_dag(truth), as_dag(est)
    tp, fp, fn, rev = _edge_counts(truth, est)
    p, r = precision_recall(truth, est)
    if with_sid is None:
        with_sid = truth.d <= SID_MAX_D
    return GraphMetrics(
        shd=fp + fn + rev,
        sid=sid(truth, est) if with_sid else None,
        precision=p,
        recall=r,
        tp=tp,
        fp=fp,
        fn=fn,
        reversed=rev,
    )


# ----------------------------------------------------------------------- I/O


def write_edge_list(g: Dag, path) -> None:
    """``i j`` per line (0-based), preceded by a ``# d=<n>`` header."""
    lines = [f"# d={g.d}"] + [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, d: Optional[int] = None) -> Dag:
    edges = []
    header_d = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("d="):
                header_d = int(body[2:])
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"{path}:{lineno}: expected 'i j', got {raw!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-integer node id in {raw!r}") from None
    if d is None:
        d = header_d
    if d is None:
        d = 1 + max((max(e) for e in edges), default=-1)
    elif header_d is not None and header_d != d:
        raise DimensionMismatch(f"{path}: header says d={header_d}, caller expects d={d}")
    return Dag.from_edges(d, edges)


def write_adjacency_csv(g: Dag, path) -> None:
    rows = [",".join("1" if v else "0" for v in row) for row in g.adj]
    Path(path).write_text("\n".join(rows) + "\n")


def read_adjacency_csv(path) -> Dag:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            rows.append([int(float(c)) for c in cells])
        except ValueError:
            # tolerate a header row of column names
            if lineno == 1 and not rows:
                continue
            raise ValidationError(f"{path}:{lineno}: non-numeric adjacency entry in {raw!r}") from None
    a = np.array(rows)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{path}: adjacency must be square, got shape {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise ValidationError(f"{path}: adjacency entries must be 0 or 1")
    return Dag(a.astype(bool))


def read_graph(path, d: Optional[int] = None) -> Dag:
    """Read either format, chosen by content: commas mean a dense matrix."""
    text = Path(path).read_text()
    if "," in text:
        g = read_adjacency_csv(path)
        if d is not None and g.d != d:
            raise DimensionMismatch(f"{path}: adjacency has d={g.d}, expected {d}")
        return g
    return read_edge_list(path, d)
