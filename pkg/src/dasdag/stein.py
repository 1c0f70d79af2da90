"""Stein-identity estimators of the score and of its Jacobian.

With an RBF kernel ``k(x, y) = exp(-|x - y|^2 / (2 h^2))``, Gram matrix ``K``
and row sums ``R``, the ridge-regularised first-order estimate is

    G = -(K + n eta I)^{-1} B,    B = (X * R - K X) / h^2

and the second-order estimate of ``d s_l / d x_j`` is

    -G_l G_j + (K + n eta I)^{-1} N_lj

where ``N_lj`` is the kernel sum of ``d^2 k / (d x_l d x_j)`` over the second
argument. Every solve reuses one Cholesky factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import pdist

from . import _kernels
from .errors import InsufficientSamples, NumericalFailure, ValidationError

MEDIAN = "median"
MEDIAN_MAX_ROWS = 1000
RIDGE_RETRY_FACTOR = 10.0


@dataclass(frozen=True)
class SteinConfig:
    """Estimator hyperparameters.

    Parameters
    ----------
    bandwidth : "median" or float
        Kernel bandwidth rule; a positive float fixes ``h``.
    ridge : float
        ``eta``; ``n * eta`` is added to the kernel diagonal.
    chunk_size : int
        Maximum number of right-hand sides per triangular solve.
    """

    bandwidth: Union[str, float] = MEDIAN
    ridge: float = 1e-3
    chunk_size: int = 256

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != MEDIAN:
                raise ValidationError(f"bandwidth must be {MEDIAN!r} or a positive number, got {self.bandwidth!r}")
        elif not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValidationError(f"fixed bandwidth must be positive, got {self.bandwidth}")
        if not (np.isfinite(self.ridge) and self.ridge > 0):
            raise ValidationError(f"ridge must be positive, got {self.ridge}")
        if int(self.chunk_size) < 1:
            raise ValidationError(f"chunk_size must be >= 1, got {self.chunk_size}")

    def to_dict(self) -> dict:
        return {"bandwidth": self.bandwidth, "ridge": self.ridge, "chunk_size": int(self.chunk_size)}

    @classmethod
    def from_dict(cls, obj: dict) -> "SteinConfig":
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class ScoreJacobianRows:
    """Per-sample estimates of one row of the score Jacobian.

    ``entries[i, k]`` estimates ``d s_l / d x_{columns[k]}`` at sample ``i``.
    Values are signed; consumers take absolute values as needed.
    """

    row_index: int
    entries: np.ndarray
    columns: Tuple[int, ...]

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64, copy=True)
        if e.ndim != 2 or e.shape[1] != len(self.columns):
            raise ValidationError(f"entries shape {e.shape} does not match {len(self.columns)} columns")
        if not np.all(np.isfinite(e)):
            raise NumericalFailure("non-finite Jacobian estimate")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "columns", tuple(int(c) for c in self.columns))

    def column(self, node: int) -> np.ndarray:
        return self.entries[:, self.columns.index(node)]

    def off_diagonal(self) -> Tuple[Tuple[int, ...], np.ndarray]:
        """Column labels and entries with the row's own column removed."""
        keep = [k for k, c in enumerate(self.columns) if c != self.row_index]
        return tuple(self.columns[k] for k in keep), self.entries[:, keep]

    def mean_abs(self) -> np.ndarray:
        return np.abs(self.entries).mean(axis=0)


def _values(X) -> np.ndarray:
    v = getattr(X, "values", X)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2:
        raise ValidationError(f"expected a 2-D sample matrix, got shape {v.shape}")
    if v.shape[0] < 2:
        raise InsufficientSamples(f"need n >= 2 samples, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("sample matrix contains non-finite values")
    return v


def median_heuristic(X, max_rows: int = MEDIAN_MAX_ROWS) -> float:
    """Median pairwise Euclidean distance, 1.0 if that median is zero.

    Above ``max_rows`` rows a subsample is drawn with a seed derived from the
    data shape, so the result is deterministic.
    """
    v = _values(X)
    n, d = v.shape
    if n > max_rows:
        rng = np.random.default_rng([n, d, max_rows])
        v = v[np.sort(rng.choice(n, size=max_rows, replace=False))]
    med = float(np.median(pdist(v)))
    return med if med > 0 else 1.0


class _SteinSystem:
    """Kernel quantities and the factorised ridge system for one sample matrix."""

    def __init__(self, X: np.ndarray, cfg: SteinConfig):
        self.X = X
        self.cfg = cfg
        n = X.shape[0]
        self.h = median_heuristic(X) if cfg.bandwidth == MEDIAN else float(cfg.bandwidth)
        self.K = _kernels.rbf_gram(X, self.h)
        self.R = self.K.sum(axis=1)
        self.KX = self.K @ X
        self.ridge_used = cfg.ridge
        self._factor = self._factorize(n * cfg.ridge)
        if self._factor is None:
            self.ridge_used = cfg.ridge * RIDGE_RETRY_FACTOR
            self._factor = self._factorize(n * self.ridge_used)
        if self._factor is None:
            raise NumericalFailure(
                f"kernel system not positive definite even with ridge {self.ridge_used:g} (n={n}, h={self.h:g})"
            )

    def _factorize(self, shift: float):
        A = self.K.copy()
        A[np.diag_indices_from(A)] += shift
        try:
            return cho_factor(A, lower=True, overwrite_a=True, check_finite=False)
        except LinAlgError:
            return None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty_like(rhs)
        step = int(self.cfg.chunk_size)
        for s in range(0, rhs.shape[1], step):
            out[:, s:s + step] = cho_solve(self._factor, rhs[:, s:s + step], check_finite=False)
        return out

    def gradient(self) -> np.ndarray:
        B = (self.X * self.R[:, None] - self.KX) / self.h**2
        return -self.solve(B)

    def hessian_diag(self, G: np.ndarray) -> np.ndarray:
        X, h = self.X, self.h
        N2 = (X * X * self.R[:, None] - 2.0 * X * self.KX + self.K @ (X * X)) / h**4
        N2 -= self.R[:, None] / h**2
        return -G * G + self.solve(N2)

    def hessian_row(self, G: np.ndarray, k: int) -> np.ndarray:
        X, h = self.X, self.h
        xl = X[:, k:k + 1]
        N = (xl * X * self.R[:, None] - xl * self.KX - X * self.KX[:, k:k + 1] + self.K @ (xl * X)) / h**4
        N[:, k] -= self.R / h**2
        return -G[:, k:k + 1] * G + self.solve(N)


def _checked(M: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(M)):
        raise NumericalFailure(f"non-finite {what} estimate")
    return M


def _active_values(X, active: Optional[Sequence[int]]):
    v = _values(X)
    if active is None:
        return v, tuple(range(v.shape[1]))
    cols = tuple(int(c) for c in active)
    if not cols:
        raise ValidationError("active column set is empty")
    if min(cols) < 0 or max(cols) >= v.shape[1] or len(set(cols)) != len(cols):
        raise ValidationError(f"invalid active columns {cols} for d={v.shape[1]}")
    return np.ascontiguousarray(v[:, cols]), cols


def stein_gradient(X, cfg: SteinConfig = SteinConfig(), active: Optional[Sequence[int]] = None) -> np.ndarray:
    """Score estimates, ``n x m`` over the active columns (all by default)."""
    v, _ = _active_values(X, active)
    return _checked(_SteinSystem(v, cfg).gradient(), "score")


def stein_hessian_diag(X, cfg: SteinConfig = SteinConfig(), active: Optional[Sequence[int]] = None) -> np.ndarray:
    """Estimates of ``d s_j / d x_j`` for every active column, ``n x m``."""
    v, _ = _active_values(X, active)
    system = _SteinSystem(v, cfg)
    return _checked(system.hessian_diag(system.gradient()), "Jacobian diagonal")


def stein_hessian_row(
    X, l: int, cfg: SteinConfig = SteinConfig(), active: Optional[Sequence[int]] = None
) -> ScoreJacobianRows:
    """Estimates of row ``l`` of the score Jacobian over the active columns.

    ``l`` is an original node id and must be active.
    """
    v, cols = _active_values(X, active)
    if int(l) not in cols:
        raise ValidationError(f"row {l} is not among the active columns")
    k = cols.index(int(l))
    system = _SteinSystem(v, cfg)
    rows = system.hessian_row(system.gradient(), k)
    return ScoreJacobianRows(int(l), _checked(rows, "Jacobian row"), cols)
