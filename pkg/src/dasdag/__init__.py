"""Causal DAG discovery from score-Jacobian estimates in additive Gaussian noise models."""
from .edges import CandidateGraph, DiscoveryParams, DiscoveryReport, cam_prune, das_select, discover
from .errors import (
    CycleDetected,
    DasError,
    DimensionMismatch,
    EmptyDataset,
    InsufficientSamples,
    InvalidDegreesOfFreedom,
    InvalidDof,
    NumericalFailure,
    SingularDesign,
    ValidationError,
    ZeroVariancePair,
)
from .graph import (
    Dag,
    GraphMetrics,
    Ordering,
    full_dag_from_order,
    graph_metrics,
    precision_recall,
    sample_er,
    sample_sf,
    shd,
    sid,
    topological_sort,
)
from .order import OrderingResult, linear_degeneracy_diagnostic, score_order
from .stats import TestResult, f_test_nested, student_t_cdf, welch_one_sided
from .stein import ScoreJacobianRows, SteinConfig, median_heuristic, stein_gradient, stein_hessian_diag, stein_hessian_row
from .synth import Dataset, ScmSpec, analytic_score, analytic_score_jacobian, draw, sample_scm

__version__ = "0.1.0"
