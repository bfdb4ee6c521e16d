"""GDP models with quadratic constraints: reformulations, generators, oracles and export."""

from .model import (
    FEAS_TOL,
    Constraint,
    Disjunct,
    Disjunction,
    EpsHullExpr,
    GdpError,
    GdpModel,
    LinearRow,
    LogicClause,
    MinlpModel,
    PolynomialExpr,
    QuadraticExpr,
    Row,
    Variable,
    interval_bound,
    validate,
)
from .reform import METHODS, ReformConfig, TransformReport, reformulate

__version__ = "0.1.0"

__all__ = [
    "FEAS_TOL",
    "METHODS",
    "Constraint",
    "Disjunct",
    "Disjunction",
    "EpsHullExpr",
    "GdpError",
    "GdpModel",
    "LinearRow",
    "LogicClause",
    "MinlpModel",
    "PolynomialExpr",
    "QuadraticExpr",
    "ReformConfig",
    "Row",
    "TransformReport",
    "Variable",
    "interval_bound",
    "reformulate",
    "validate",
]
