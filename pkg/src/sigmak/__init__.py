"""Sigma-k curvature machinery, conformal tensor calculus on chart grids,
Newton/continuation solvers for the fully nonlinear curvature equations,
and the a-priori-estimate verification harness."""

from .errors import (
    AdmissibilityError,
    ChartError,
    HypothesisError,
    ManifestError,
    MetricError,
    NormalizationError,
    NumericalError,
    SigmakError,
    UmbilicityError,
)
from .grids import ChartGrid, make_grid
from .geometry import MetricField, ScalarField, Tensor2Field, make_metric
from .symfunc import ConeLabel, OperatorSpec, make_operator
from .operator import LinearizedCoefficients, ProblemSpec, RhsModel
from .solver import ContinuationState, NewtonReport, SolverConfig
from .estimates import BoundaryMaxReport, CutoffField, EstimateReport

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "BoundaryMaxReport",
    "ChartGrid",
    "ChartError",
    "ConeLabel",
    "ContinuationState",
    "CutoffField",
    "EstimateReport",
    "HypothesisError",
    "LinearizedCoefficients",
    "ManifestError",
    "MetricField",
    "ScalarField",
    "MetricError",
    "NewtonReport",
    "NormalizationError",
    "NumericalError",
    "OperatorSpec",
    "ProblemSpec",
    "RhsModel",
    "SigmakError",
    "SolverConfig",
    "Tensor2Field",
    "UmbilicityError",
    "make_grid",
    "make_metric",
    "make_operator",
]
