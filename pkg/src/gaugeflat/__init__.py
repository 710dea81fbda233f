"""Numerical gauge calculus on chart domains.

Connections ``d + A`` on trivial bundles over boxes in R^n, their curvature,
Chern character and Chern-Simons forms, the explicit flattening of a
connection as a block of ``dg g^-1``, structured inverses (plain and with an
orthogonal or symplectic form), and parallel transport.
"""
from .connections import (
    Connection,
    chern_character,
    cs_form,
    curvature,
    direct_sum,
    dual,
    induce,
    lemma_ss_check,
    pullback,
)
from .expr import parse_expr
from .fields import ChartDomain, eval_jet
from .flattening import flatten, rank_check, structured_inverse
from .gstruct import BilinearStructure, g_structured_inverse, venice_double, venice_verify
from .transport import PathSpec, group_membership, monodromy_check

__all__ = [
    "BilinearStructure",
    "ChartDomain",
    "Connection",
    "PathSpec",
    "chern_character",
    "cs_form",
    "curvature",
    "direct_sum",
    "dual",
    "eval_jet",
    "flatten",
    "g_structured_inverse",
    "group_membership",
    "induce",
    "lemma_ss_check",
    "monodromy_check",
    "parse_expr",
    "pullback",
    "rank_check",
    "structured_inverse",
    "venice_double",
    "venice_verify",
]
