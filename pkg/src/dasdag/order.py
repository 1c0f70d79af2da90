"""Topological ordering by repeated leaf identification.

A leaf of an additive Gaussian noise model has a constant Jacobian diagonal
entry ``d s_l / d x_l = -1 / sigma_l^2``; every other node's entry varies with
the data. Each step estimates the diagonal on the remaining columns, removes
the column with the smallest sample variance and repeats.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import EmptyDataset
from .graph import LEAF_FIRST, Ordering
from .stein import SteinConfig, _values, stein_hessian_diag

DEGENERACY_THRESHOLD = 4.0


@dataclass(frozen=True, eq=False)
class OrderingResult:
    """Outcome of :func:`score_order`.

    Attributes
    ----------
    removal : Ordering
        Nodes in the order they were removed (leaf first).
    diag_variances : tuple of ndarray
        ``diag_variances[t][k]`` is the variance for ``active[t][k]`` at step ``t``.
    active : tuple of tuple of int
        Active node ids at each step.
    diag_means : ndarray
        Mean diagonal estimate of every node at the first step.
    """

    removal: Ordering
    diag_variances: Tuple[np.ndarray, ...]
    active: Tuple[Tuple[int, ...], ...]
    diag_means: np.ndarray = None

    @property
    def ordering(self) -> Ordering:
        """Source-first topological ordering."""
        return self.removal.source_first()

    @property
    def d(self) -> int:
        return len(self.removal)

    @staticmethod
    def _spread(v: np.ndarray) -> float:
        if v.size < 2:
            return float("inf")
        lo, hi = float(v.min()), float(v.max())
        if lo <= 0:
            return float("inf") if hi > 0 else 1.0
        return hi / lo

    @property
    def variance_ratio(self) -> float:
        """Max over min diagonal variance at the first step."""
        return self._spread(self.diag_variances[0])

    @property
    def degeneracy_ratio(self) -> float:
        """Max over min of ``Var / mean^2`` of the diagonal at the first step.

        Dividing by the squared mean removes the per-node scale of the
        estimator noise, so a model where every diagonal is constant gives a
        ratio near 1 whatever the marginal scales.
        """
        if self.diag_means is None:
            return self.variance_ratio
        m2 = np.asarray(self.diag_means) ** 2
        v = self.diag_variances[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(m2 > 0, v / m2, np.inf)
        return self._spread(rel)

    def predecessors(self, node: int) -> Tuple[int, ...]:
        """Nodes placed before ``node`` in the source-first ordering."""
        pi = self.ordering.pi
        return tuple(pi[: pi.index(int(node))])

    def to_dict(self) -> dict:
        return {
            "removal_sequence": list(self.removal.pi),
            "ordering": list(self.ordering.pi),
            "degeneracy_ratio": self.degeneracy_ratio,
            "variance_ratio": self.variance_ratio,
            "diag_variances": [
                {str(a): float(v) for a, v in zip(act, var)} for act, var in zip(self.active, self.diag_variances)
            ],
        }


def score_order(X, cfg: SteinConfig = SteinConfig()) -> OrderingResult:
    """Estimate a topological ordering of the columns of ``X``.

    Ties in the variance are broken by the smaller node id.
    """
    v = _values(X)
    d = v.shape[1]
    if d == 0:
        raise EmptyDataset("dataset has no columns")
    active = list(range(d))
    removal, variances, actives = [], [], []
    first_means = None
    while active:
        if len(active) == 1:
            var = np.zeros(1)
            means = None
        else:
            H = stein_hessian_diag(v, cfg, active=active)
            var = H.var(axis=0, ddof=1)
            means = H.mean(axis=0)
        if first_means is None:
            first_means = means
        actives.append(tuple(active))
        variances.append(var)
        k = int(np.argmin(var))  # first minimum, active is ascending
        removal.append(active.pop(k))
    return OrderingResult(Ordering(tuple(removal), LEAF_FIRST), tuple(variances), tuple(actives), first_means)


def linear_degeneracy_diagnostic(result: OrderingResult, threshold: float = DEGENERACY_THRESHOLD) -> bool:
    """True when the first-step spread of ``Var / mean^2`` is below ``threshold``.

    Advisory only. Linear Gaussian models give constant diagonals for every
    node, so no leaf stands out. ``threshold = 0`` disables the flag.
    """
    return result.degeneracy_ratio < threshold
