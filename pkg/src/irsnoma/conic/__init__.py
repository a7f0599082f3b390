"""Conic intermediate representation and the in-repo interior-point solver."""

from .program import (
    ConeProgram,
    MatrixVar,
    ScalarVar,
    LinExpr,
    LinCon,
    QuadTerm,
    QuadCon,
    Psd2Con,
    DiagCon,
    ModelingError,
    embed_quadratic_as_psd,
    lower_quadratics,
    realify,
)
from .solver import SolverResult, SolverOptions, solve
from .kkt import CertificationError, check_kkt

__all__ = [
    "ConeProgram",
    "MatrixVar",
    "ScalarVar",
    "LinExpr",
    "LinCon",
    "QuadTerm",
    "QuadCon",
    "Psd2Con",
    "DiagCon",
    "ModelingError",
    "embed_quadratic_as_psd",
    "lower_quadratics",
    "realify",
    "SolverResult",
    "SolverOptions",
    "solve",
    "CertificationError",
    "check_kkt",
]
