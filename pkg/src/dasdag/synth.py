"""Additive Gaussian noise SCMs: sampling, data generation, analytic score oracles.

Nonlinear mechanisms are random Fourier feature sums

    f(u) = sum_m a_m cos(<w_m, u> + b_m),   w_m ~ N(0, I),  b_m ~ U[0, 2 pi)

which behave like draws from a unit-lengthscale RBF Gaussian process but have
closed-form first and second derivatives.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientSamples, ValidationError
from .graph import Dag, topological_sort

NONLINEAR = "nonlinear"
LINEAR = "linear"

N_FEATURES = 64
PROBE_SIZE = 2000
MIN_SLOPE = 1e-3
MAX_REDRAWS = 100
DEFAULT_SIGMA_RANGE = (1.0, 1.0)


@dataclass(frozen=True, eq=False)
class FunctionModel:
    """Mechanism ``f_i`` of one node, evaluated on its parents' columns.

    ``weights`` is ``(M, p)``, ``phases`` and ``amplitudes`` are ``(M,)`` in
    nonlinear mode; in linear mode only ``coefs`` (``(p,)``) is used.
    """

    parents: Tuple[int, ...]
    mode: str = NONLINEAR
    weights: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None
    amplitudes: Optional[np.ndarray] = None
    coefs: Optional[np.ndarray] = None

    @property
    def is_zero(self) -> bool:
        return len(self.parents) == 0

    def value(self, U: np.ndarray) -> np.ndarray:
        """``f`` at rows of ``U`` (``n x p``)."""
        if self.is_zero:
            return np.zeros(U.shape[0])
        if self.mode == LINEAR:
            return U @ self.coefs
        return np.cos(U @ self.weights.T + self.phases) @ self.amplitudes

    def gradient(self, U: np.ndarray) -> np.ndarray:
        """``df/du`` at rows of ``U``, shape ``n x p``."""
        if self.is_zero:
            return np.zeros((U.shape[0], 0))
        if self.mode == LINEAR:
            return np.broadcast_to(self.coefs, U.shape).copy()
        S = np.sin(U @ self.weights.T + self.phases)
        return -(S * self.amplitudes) @ self.weights

    def hessian(self, U: np.ndarray) -> np.ndarray:
        """Second derivatives, shape ``n x p x p``."""
        p = len(self.parents)
        if self.is_zero or self.mode == LINEAR:
            return np.zeros((U.shape[0], p, p))
        C = np.cos(U @ self.weights.T + self.phases) * self.amplitudes
        return -np.einsum("nm,mk,ml->nkl", C, self.weights, self.weights)

    def to_dict(self) -> dict:
        out = {"parents": list(self.parents), "mode": self.mode}
        for name in ("weights", "phases", "amplitudes", "coefs"):
            arr = getattr(self, name)
            if arr is not None:
                out[name] = arr.tolist()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "FunctionModel":
        arrays = {k: np.asarray(obj[k], dtype=float) for k in ("weights", "phases", "amplitudes", "coefs") if k in obj}
        if "weights" in arrays:
            arrays["weights"] = arrays["weights"].reshape(-1, len(obj["parents"]))
        return cls(parents=tuple(obj["parents"]), mode=obj.get("mode", NONLINEAR), **arrays)


@dataclass(frozen=True, eq=False)
class ScmSpec:
    """Structural causal model ``X_i = f_i(pa_i(X)) + sigma_i * N(0, 1)``."""

    dag: Dag
    functions: Tuple[FunctionModel, ...]
    sigmas: np.ndarray
    mode: str = NONLINEAR

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=float)
        if sig.shape != (self.dag.d,) or np.any(sig <= 0):
            raise ValidationError("sigmas must be a positive vector with one entry per node")
        for j, f in enumerate(self.functions):
            if tuple(f.parents) != tuple(int(p) for p in self.dag.parents(j)):
                raise ValidationError(f"function {j} parents {f.parents} differ from DAG parents")
        object.__setattr__(self, "sigmas", sig)

    @property
    def d(self) -> int:
        return self.dag.d

    def mechanism_values(self, X: np.ndarray) -> np.ndarray:
        """``F[:, i] = f_i(pa_i(x))`` for each row of ``X``."""
        F = np.zeros_like(X)
        for i, f in enumerate(self.functions):
            if not f.is_zero:
                F[:, i] = f.value(X[:, list(f.parents)])
        return F

    def log_density(self, x: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        R = X - self.mechanism_values(X)
        out = -0.5 * np.sum((R / self.sigmas) ** 2, axis=1) - np.sum(np.log(self.sigmas * np.sqrt(2 * np.pi)))
        return out if np.ndim(x) > 1 else out[0]

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mode": self.mode,
            "edges": self.dag.edges(),
            "sigmas": self.sigmas.tolist(),
            "functions": [f.to_dict() for f in self.functions],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ScmSpec":
        dag = Dag.from_edges(obj["d"], [tuple(e) for e in obj["edges"]])
        fns = tuple(FunctionModel.from_dict(f) for f in obj["functions"])
        return cls(dag=dag, functions=fns, sigmas=np.asarray(obj["sigmas"]), mode=obj.get("mode", NONLINEAR))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ScmSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n x d`` observation matrix plus provenance."""

    values: np.ndarray
    columns: Tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise ValidationError(f"dataset must be 2-D, got shape {v.shape}")
        if v.shape[0] < 2:
            raise InsufficientSamples(f"dataset needs n >= 2 rows, got {v.shape[0]}")
        bad = np.argwhere(~np.isfinite(v))
        if len(bad):
            r, c = bad[0]
            raise ValidationError(f"non-finite value at row {r}, column {c}")
        v.setflags(write=False)
        cols = tuple(self.columns) if self.columns else tuple(f"X{i}" for i in range(v.shape[1]))
        if len(cols) != v.shape[1]:
            raise ValidationError(f"{len(cols)} column names for {v.shape[1]} columns")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def standardized(self) -> bool:
        return bool(self.meta.get("standardized", False))

    def standardize(self) -> "Dataset":
        v = self.values
        std = v.std(axis=0)
        std[std == 0] = 1.0
        meta = dict(self.meta, standardized=True)
        return Dataset((v - v.mean(axis=0)) / std, self.columns, meta)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.values:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, meta: Optional[dict] = None) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        rows = [r for r in rows if any(c.strip() for c in r)]
        if not rows:
            raise ValidationError(f"{path}: empty file")
        header = [c.strip() for c in rows[0]]
        data = []
        for lineno, r in enumerate(rows[1:], start=2):
            if len(r) != len(header):
                raise ValidationError(f"{path}: row {lineno} has {len(r)} fields, header has {len(header)}")
            vals = []
            for col, cell in enumerate(r):
                try:
                    x = float(cell)
                except ValueError:
                    raise ValidationError(f"{path}: row {lineno}, column {col} ({header[col]!r}): cannot parse {cell!r}") from None
                if not np.isfinite(x):
                    raise ValidationError(f"{path}: row {lineno}, column {col} ({header[col]!r}): non-finite value {cell!r}")
                vals.append(x)
            data.append(vals)
        m = dict(meta or {})
        m.setdefault("source", str(path))
        return cls(np.asarray(data, dtype=np.float64).reshape(len(data), len(header)), tuple(header), m)


# ------------------------------------------------------------------- sampling


def _draw_nonlinear(p: int, rng: np.random.Generator, n_features: int):
    W = rng.standard_normal((n_features, p))
    b = rng.uniform(0.0, 2 * np.pi, n_features)
    a = rng.standard_normal(n_features) * np.sqrt(2.0 / n_features)
    return W, b, a


def sample_scm(
    dag: Dag,
    mode: str = NONLINEAR,
    sigma_range: Tuple[float, float] = DEFAULT_SIGMA_RANGE,
    rng: Optional[np.random.Generator] = None,
    n_features: int = N_FEATURES,
) -> ScmSpec:
    """Draw mechanisms and noise scales for every node of ``dag``.

    Nonlinear mechanisms are rescaled to unit variance over a probe sample
    of their parents and redrawn while some parent's maximum absolute slope
    on the probe stays below ``MIN_SLOPE``. Linear coefficients have
    magnitude in ``[0.5, 2]`` and a random sign.
    """
    if rng is None:
        rng = np.random.default_rng()
    lo, hi = sigma_range
    if not 0 < lo <= hi:
        raise ValidationError(f"sigma_range must satisfy 0 < lo <= hi, got {sigma_range}")
    if mode not in (NONLINEAR, LINEAR):
        raise ValidationError(f"mode must be {NONLINEAR!r} or {LINEAR!r}, got {mode!r}")
    d = dag.d
    sigmas = rng.uniform(lo, hi, d)
    probe_rng = np.random.default_rng(rng.integers(2**63))
    probe = np.zeros((PROBE_SIZE, d))
    functions = [None] * d
    for j in topological_sort(dag).pi:
        pa = tuple(int(p) for p in dag.parents(j))
        if not pa:
            f = FunctionModel(parents=())
        elif mode == LINEAR:
            coefs = rng.uniform(0.5, 2.0, len(pa)) * rng.choice([-1.0, 1.0], len(pa))
            f = FunctionModel(parents=pa, mode=LINEAR, coefs=coefs)
        else:
            U = probe[:, list(pa)]
            for _ in range(MAX_REDRAWS):
                W, b, a = _draw_nonlinear(len(pa), rng, n_features)
                f = FunctionModel(pa, NONLINEAR, W, b, a)
                std = f.value(U).std()
                if std > 0:
                    f = FunctionModel(pa, NONLINEAR, W, b, a / std)
                if np.all(np.abs(f.gradient(U)).max(axis=0) >= MIN_SLOPE):
                    break
            else:
                raise ValidationError(f"could not draw a non-degenerate mechanism for node {j}")
        functions[j] = f
        probe[:, j] = f.value(probe[:, list(pa)]) + sigmas[j] * probe_rng.standard_normal(PROBE_SIZE)
    return ScmSpec(dag=dag, functions=tuple(functions), sigmas=sigmas, mode=mode)


def draw(scm: ScmSpec, n: int, rng: np.random.Generator, meta: Optional[dict] = None) -> Dataset:
    """Ancestral sampling of ``n`` observations."""
    if n < 2:
        raise InsufficientSamples(f"n must be >= 2, got {n}")
    noise = rng.standard_normal((n, scm.d))
    X = np.zeros((n, scm.d))
    for j in topological_sort(scm.dag).pi:
        f = scm.functions[j]
        X[:, j] = f.value(X[:, list(f.parents)]) + scm.sigmas[j] * noise[:, j]
    m = {"generator": f"scm-{scm.mode}", "standardized": False}
    m.update(meta or {})
    return Dataset(X, meta=m)


# -------------------------------------------------------------------- oracles


def _mechanism_derivatives(scm: ScmSpec, X: np.ndarray, second: bool):
    n, d = X.shape
    F = np.zeros((n, d))
    D = np.zeros((n, d, d))  # D[:, i, j] = d f_i / d x_j
    Hs = [None] * d
    for i, f in enumerate(scm.functions):
        if f.is_zero:
            continue
        pa = list(f.parents)
        U = X[:, pa]
        F[:, i] = f.value(U)
        D[:, i, pa] = f.gradient(U)
        if second:
            Hs[i] = f.hessian(U)
    return F, D, Hs


def analytic_score(scm: ScmSpec, x: np.ndarray) -> np.ndarray:
    """Exact ``grad log p`` at ``x`` (a ``d`` vector or ``n x d`` batch)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    F, D, _ = _mechanism_derivatives(scm, X, second=False)
    Rw = (X - F) / scm.sigmas**2
    S = -Rw + np.einsum("ni,nij->nj", Rw, D)
    return S if np.ndim(x) > 1 else S[0]


def analytic_score_jacobian(scm: ScmSpec, x: np.ndarray) -> np.ndarray:
    """Exact Jacobian ``d s_j / d x_k`` at ``x`` (``d x d``, or ``n x d x d`` for a batch)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = X.shape
    F, D, Hs = _mechanism_derivatives(scm, X, second=True)
    inv_var = 1.0 / scm.sigmas**2
    Rw = (X - F) * inv_var
    M = np.eye(d)[None] - D  # d r_i / d x_k
    J = -np.einsum("nij,i,nik->njk", M, inv_var, M)
    for i, H in enumerate(Hs):
        if H is None:
            continue
        rows, cols = np.ix_(scm.functions[i].parents, scm.functions[i].parents)
        J[:, rows, cols] += Rw[:, i, None, None] * H
    return J if np.ndim(x) > 1 else J[0]
