"""Finite-difference checks of weighted positivity and pointwise inequalities."""

from .fundsol import WeightEvaluator, WeightKind
from .grid import DomainShape, GridDomain, GridFunction, ShapeKind, build_domain, gradient, lp_norm, sobolev_seminorm
from .inequalities import (
    CutoffSpec,
    InequalityCase,
    RatioReport,
    counterexample_suite,
    green_sandwich_check,
    hardy_chain_ratio,
    hardy_ratio,
    inequality_ratio,
)
from .operators import Lame3D, Polyharmonic, ScalarDivForm, SolveConfig, apply, assemble, green_column, solve_dirichlet
from .positivity import (
    PunctureSpec,
    alpha_threshold_search,
    min_rayleigh,
    scalar_weighted_identity_check,
    strong_defect,
    weighted_form,
)
from .testfunctions import TestFunctionKind, TestFunctionSpec, generate_test_function

__version__ = "0.1.0"

__all__ = [
    "CutoffSpec",
    "DomainShape",
    "GridDomain",
    "GridFunction",
    "InequalityCase",
    "Lame3D",
    "Polyharmonic",
    "PunctureSpec",
    "RatioReport",
    "ScalarDivForm",
    "ShapeKind",
    "SolveConfig",
    "TestFunctionKind",
    "TestFunctionSpec",
    "WeightEvaluator",
    "WeightKind",
    "alpha_threshold_search",
    "apply",
    "assemble",
    "build_domain",
    "counterexample_suite",
    "generate_test_function",
    "gradient",
    "green_column",
    "green_sandwich_check",
    "hardy_chain_ratio",
    "hardy_ratio",
    "inequality_ratio",
    "lp_norm",
    "min_rayleigh",
    "scalar_weighted_identity_check",
    "sobolev_seminorm",
    "solve_dirichlet",
    "strong_defect",
    "weighted_form",
]
