"""Orthogonal/symplectic structures, G-structured inverses and the doubling check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from . import fields as F
from .connections import Connection, chern_character, direct_sum, dual
from .fields import SmoothMatrixField
from .flattening import structured_inverse
from .forms import FormField, PolyForm, exterior_derivative

Kind = Literal["symmetric", "antisymmetric"]
KINDS = ("symmetric", "antisymmetric")


class StructureError(ValueError):
    pass


class NotCompatibleError(ValueError):
    """Connection does not preserve the bilinear form."""


@dataclass(frozen=True)
class BilinearStructure:
    kind: str
    phi: np.ndarray | SmoothMatrixField

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StructureError(f"unknown kind {self.kind!r}")
        if isinstance(self.phi, SmoothMatrixField):
            if self.phi.shape[0] != self.phi.shape[1]:
                raise StructureError("phi must be square")
            return
        phi = np.array(self.phi, dtype=complex)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise StructureError("phi must be a square matrix")
        sign = 1 if self.kind == "symmetric" else -1
        if not np.array_equal(phi.T, sign * phi):
            raise StructureError(f"phi is not {self.kind}")
        if abs(np.linalg.det(phi)) <= 1e-10:
            raise StructureError("phi is degenerate")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def infer(cls, phi) -> "BilinearStructure":
        phi = np.asarray(phi, dtype=complex)
        if np.array_equal(phi.T, phi):
            return cls("symmetric", phi)
        if np.array_equal(phi.T, -phi):
            return cls("antisymmetric", phi)
        raise StructureError("phi is neither symmetric nor antisymmetric")

    @property
    def size(self) -> int:
        return self.phi.shape[0]

    @property
    def is_constant(self) -> bool:
        return not isinstance(self.phi, SmoothMatrixField)


def check_parallel(c: Connection, s: BilinearStructure, samples) -> float:
    """max over k and samples of the parallelism defect of ``phi``.

    ``phi`` is parallel iff ``d_k phi = A_k^T phi + phi A_k``.
    """
    if s.size != c.rank:
        raise StructureError(f"structure of size {s.size} on a rank-{c.rank} bundle")
    A = c.values(samples)
    At = np.swapaxes(A, -1, -2)
    if s.is_constant:
        res = At @ s.phi + s.phi @ A
    else:
        pj = F.eval_jet(s.phi, samples, 1)
        phi, dphi = pj.value, pj.first
        res = dphi - At @ phi - phi @ A
    return float(np.max(np.abs(res)))


def canonical_pairing(k: int, kind: str) -> BilinearStructure:
    """``[[0, I], [+-I, 0]]`` on ``W + W*``."""
    if k < 1:
        raise ValueError("rank must be positive")
    I, Z = np.eye(k), np.zeros((k, k))
    sign = 1.0 if kind == "symmetric" else -1.0
    return BilinearStructure(kind, np.block([[Z, I], [sign * I, Z]]))


def dual_structure(s: BilinearStructure) -> BilinearStructure:
    """Structure on the dual bundle transported by contraction: ``(phi^-1)^T``."""
    if not s.is_constant:
        raise StructureError("dual_structure needs a constant phi")
    phi_dual = np.linalg.inv(s.phi).T
    sign = 1 if s.kind == "symmetric" else -1
    # restore exact (anti)symmetry lost to rounding in the inverse
    phi_dual = 0.5 * (phi_dual + sign * phi_dual.T)
    return BilinearStructure(s.kind, phi_dual)


def direct_sum_structure(*ss: BilinearStructure) -> BilinearStructure:
    kinds = {s.kind for s in ss}
    if len(kinds) != 1:
        raise StructureError("direct sum of structures of different kinds")
    return BilinearStructure(kinds.pop(), scipy.linalg.block_diag(*(s.phi for s in ss)))


@dataclass
class GInverseResult:
    inverse_conn: Connection
    structure: BilinearStructure
    total_structure: BilinearStructure
    W_conn: Connection
    ambient_rank: int
    report: dict = field(default_factory=dict)


def g_structured_inverse(c: Connection, s: BilinearStructure, samples=None, tol: float = 1e-9) -> GInverseResult:
    """``(E* + W + W*, A' + A_W + A_W')`` carrying ``phi' + phi_0``."""
    if samples is None:
        samples = c.domain.sample(100, 0)
    pre = check_parallel(c, s, samples)
    if pre > tol:
        raise NotCompatibleError(f"input connection does not preserve phi (residual {pre:.3g})")
    pair = structured_inverse(c)
    W = pair.W_conn
    M = pair.rank
    inverse_conn = direct_sum(dual(c), W, dual(W))
    structure = direct_sum_structure(dual_structure(s), canonical_pairing(M - c.rank, s.kind))
    total = direct_sum_structure(s, structure)
    result = GInverseResult(inverse_conn, structure, total, W, M)
    result.report["input_compatibility"] = pre
    return result


def g_inverse_residuals(res: GInverseResult, c: Connection, samples) -> dict[str, float]:
    out = {}
    out["output_compatibility"] = check_parallel(res.inverse_conn, res.structure, samples)
    total = chern_character(c, samples) + chern_character(res.inverse_conn, samples)
    out["ch_degree0"] = float(np.max(np.abs(total.coeff(()) - 2 * res.ambient_rank)))
    pos = [len(i) for i in total.terms if len(i) > 0]
    out["ch_positive"] = max((total.max_abs(p) for p in pos), default=0.0)
    phi = res.total_structure.phi
    sign = 1 if res.total_structure.kind == "symmetric" else -1
    out["total_kind"] = float(np.max(np.abs(phi.T - sign * phi)))
    out["total_det"] = float(abs(np.linalg.det(phi)))
    return out


@dataclass
class VeniceReport:
    per_degree: dict[int, float]

    @property
    def max_residual(self) -> float:
        return max(self.per_degree.values(), default=0.0)


def venice_verify(c: Connection, eta: FormField | None, samples) -> VeniceReport:
    """Per-degree max of ``|ch(c) - rank - d eta|`` over samples."""
    if eta is not None and any(p % 2 == 0 for p in eta.degrees):
        raise StructureError("eta must have odd degrees only")
    ch = chern_character(c, samples)
    diff = ch - PolyForm(c.n, {(): np.full(ch.coeff(()).shape, complex(c.rank))}, (1, 1))
    if eta is not None and eta.terms:
        deta = exterior_derivative(eta, samples)
        diff = diff - deta
    degrees = range(0, c.n + 1, 2)
    return VeniceReport({p: diff.max_abs(p) for p in degrees})


@dataclass
class ParityReport:
    """Per Chern degree j (form degree 2j)."""

    dual_parity: dict[int, float]
    doubling: dict[int, float]
    tol: float

    @property
    def flagged(self) -> list[int]:
        return [j for j, v in self.doubling.items() if j % 2 == 1 and v > self.tol]


def venice_double(c: Connection, kind: str, samples, tol: float = 1e-10):
    """``dual(c) + c`` with the canonical pairing, plus the per-degree parity report."""
    doubled = direct_sum(dual(c), c)
    structure = canonical_pairing(c.rank, kind)
    compat = check_parallel(doubled, structure, samples)
    ch = chern_character(c, samples)
    chd = chern_character(dual(c), samples)
    chdd = chern_character(doubled, samples)
    parity, doubling = {}, {}
    for j in range(1, c.n // 2 + 1):
        d_j = chd.degree(2 * j) - ch.degree(2 * j) * ((-1) ** j)
        parity[j] = d_j.max_abs()
        doubling[j] = (chdd.degree(2 * j) - ch.degree(2 * j) * 2).max_abs()
    report = ParityReport(parity, doubling, tol)
    return doubled, structure, compat, report
