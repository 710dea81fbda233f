"""Connections ``d + A`` on trivial bundles over a chart.

Conventions, used everywhere in the package:

* ``A = sum_k A_k dx^k`` acts on column sections;
* curvature ``F = dA + A ^ A``;
* gauge action ``A -> u A u^-1 - (du) u^-1``;
* ``ch = tr exp((i / 2 pi) F)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg

from . import fields as F
from .fields import ChartDomain, SmoothMatrixField, eval_jets
from .forms import FormField, PolyForm, exp_truncated, trace, wedge
from .jets import Jet

KAPPA = 1j / (2 * np.pi)


class ConnectionError_(ValueError):
    """Incompatible connections or bundle data."""


class ProjectorError(ValueError):
    pass


class FrameError(ValueError):
    pass


class Connection:
    """``d + A`` on the trivial rank-``r`` bundle over ``domain``."""

    def __init__(self, coefficients: Sequence[SmoothMatrixField], domain: ChartDomain | None = None):
        coefficients = tuple(coefficients)
        if domain is None:
            domain = coefficients[0].domain
        if len(coefficients) != domain.dim:
            raise ConnectionError_(f"need {domain.dim} coefficient fields, got {len(coefficients)}")
        shapes = {a.shape for a in coefficients}
        if len(shapes) != 1:
            raise ConnectionError_(f"coefficient shapes differ: {sorted(shapes)}")
        r, s = shapes.pop()
        if r != s:
            raise ConnectionError_("connection coefficients must be square")
        for a in coefficients:
            if a.domain != domain:
                raise ConnectionError_("coefficient field on a different chart")
        self.domain = domain
        self.A = coefficients
        self.rank = r

    @classmethod
    def from_strings(cls, domain: ChartDomain, entries) -> "Connection":
        """``entries[k]`` is the r x r grid of expression strings for ``A_k``."""
        return cls([F.ExprField.parse(grid, domain) for grid in entries], domain)

    @classmethod
    def trivial(cls, domain: ChartDomain, rank: int) -> "Connection":
        z = F.zeros(rank, rank, domain)
        return cls([z] * domain.dim, domain)

    @property
    def n(self) -> int:
        return self.domain.dim

    @property
    def form(self) -> FormField:
        return FormField.one_form(self.A)

    def jets(self, x, order: int = 0, max_order: int = 3) -> list[Jet]:
        return eval_jets(self.A, x, order, max_order)

    def values(self, x) -> np.ndarray:
        """Coefficient values, shape ``(n,) + batch + (r, r)``."""
        return np.stack([j.value for j in self.jets(x, 0)])

    def __repr__(self):
        return f"Connection(n={self.n}, rank={self.rank})"


# -- curvature and characteristic forms ------------------------------------


def _curvature_from_jets(A: Sequence[Jet], n: int) -> PolyForm:
    """``F = dA + A ^ A`` from coefficient jets (result one order lower)."""
    r = A[0].shape[0]
    terms = {}
    for i in range(n):
        for j in range(i + 1, n):
            Aij = A[i].truncate(A[i].order - 1) @ A[j].truncate(A[j].order - 1)
            Aji = A[j].truncate(A[j].order - 1) @ A[i].truncate(A[i].order - 1)
            terms[(i, j)] = A[j].partial(i) - A[i].partial(j) + Aij - Aji
    return PolyForm(n, terms, (r, r))


def curvature_jets(c: Connection, x, order: int = 0, max_order: int = 3) -> PolyForm:
    """Jet-valued curvature carrying derivatives up to ``order``."""
    return _curvature_from_jets(c.jets(x, order + 1, max_order), c.n)


def curvature(c: Connection, x) -> PolyForm:
    """Curvature 2-form ``dA + A ^ A`` at ``x``."""
    return curvature_jets(c, x, 0).values()


def _chern_from_curvature(Fc: PolyForm) -> PolyForm:
    return trace(exp_truncated(Fc * KAPPA))


class ChernForm(PolyForm):
    """Chern character value; even degrees only."""

    __slots__ = ()


class CSForm(PolyForm):
    """Chern-Simons transgression value; odd degrees only."""

    __slots__ = ("quad_nodes",)

    def __init__(self, n, terms=None, shape=None, quad_nodes: int = 0):
        super().__init__(n, terms, shape)
        self.quad_nodes = quad_nodes


def chern_character_jets(c: Connection, x, order: int = 0, max_order: int = 3) -> PolyForm:
    return _chern_from_curvature(curvature_jets(c, x, order, max_order))


def chern_character(c: Connection, x) -> ChernForm:
    """``tr exp((i/2pi) F)`` at ``x``; scalar, even degrees."""
    w = chern_character_jets(c, x, 0).values()
    return ChernForm(w.n, w.terms, w.shape)


def chern_closedness(c: Connection, x, max_order: int = 3) -> float:
    """max |d ch| at ``x`` (needs second derivatives of A)."""
    ch = chern_character_jets(c, x, 1, max_order)
    if not any(isinstance(v, Jet) for v in ch.terms.values()):
        return 0.0  # no curvature terms (n = 1): ch is the constant rank
    return ch.d().max_abs()


def _check_pair(c0: Connection, c1: Connection):
    if c0.domain != c1.domain:
        raise ConnectionError_("connections on different charts")
    if c0.rank != c1.rank:
        raise ConnectionError_(f"rank mismatch {c0.rank} vs {c1.rank}")


def cs_form_jets(c0: Connection, c1: Connection, x, quad_nodes: int = 8, order: int = 0, max_order: int = 3) -> PolyForm:
    """Jet-valued transgression form along the straight path c0 -> c1.

    ``CS = (i/2pi) int_0^1 tr(alpha ^ exp((i/2pi) F_t)) dt`` with
    ``alpha = A1 - A0``, so that ``d CS = ch(c1) - ch(c0)``.
    """
    _check_pair(c0, c1)
    n = c0.n
    nodes, weights = np.polynomial.legendre.leggauss(quad_nodes)
    ts = 0.5 * (nodes + 1.0)
    ws = 0.5 * weights
    A0 = c0.jets(x, order + 1, max_order)
    A1 = A0 if c1 is c0 else c1.jets(x, order + 1, max_order)
    alpha_jets = [a1 - a0 for a0, a1 in zip(A0, A1)]
    alpha = PolyForm(n, {(k,): a.truncate(order) for k, a in enumerate(alpha_jets)}, (c0.rank,) * 2)
    out = None
    for t, w in zip(ts, ws):
        At = [a0 + a * t for a0, a in zip(A0, alpha_jets)]
        Ft = _curvature_from_jets(At, n)
        integrand = trace(wedge(alpha, exp_truncated(Ft * KAPPA))) * (KAPPA * w)
        out = integrand if out is None else out + integrand
    return out


def cs_form(c0: Connection, c1: Connection, x, quad_nodes: int = 8) -> CSForm:
    w = cs_form_jets(c0, c1, x, quad_nodes, 0).values()
    return CSForm(w.n, w.terms, w.shape, quad_nodes=quad_nodes)


def transgression_residual(c0: Connection, c1: Connection, x, quad_nodes: int = 8) -> float:
    """max |d CS(c0, c1) - (ch(c1) - ch(c0))| at ``x``."""
    dcs = cs_form_jets(c0, c1, x, quad_nodes, 1).d().values()
    diff = chern_character(c1, x) - chern_character(c0, x)
    return (dcs - diff).max_abs()


# -- constructions ----------------------------------------------------------


def direct_sum(*cs: Connection) -> Connection:
    dom = cs[0].domain
    for c in cs[1:]:
        if c.domain != dom:
            raise ConnectionError_("direct sum of connections on different charts")
    return Connection([F.block_diag(*(c.A[k] for c in cs)) for k in range(dom.dim)], dom)


def dual(c: Connection) -> Connection:
    """Induced connection on the dual bundle: ``A'_k = -A_k^T``."""
    return Connection([-F.transpose(a) for a in c.A], c.domain)


def pullback(c: Connection, jacobian, offset, domain: ChartDomain) -> Connection:
    """Pull back along ``y -> J y + b`` from ``domain`` (in R^m) into ``c.domain``."""
    J = np.asarray(jacobian, dtype=float)
    pulled = [F.PullbackField(a, J, offset, domain) for a in c.A]
    coeffs = []
    for j in range(domain.dim):
        terms = [F.scalar_mul(J[k, j], pulled[k]) for k in range(c.n) if J[k, j] != 0]
        coeffs.append(F.add(*terms) if terms else F.zeros(c.rank, c.rank, domain))
    return Connection(coeffs, domain)


def pullback_form(w: PolyForm, jacobian) -> PolyForm:
    """Pointwise pullback of a form under a linear map with matrix ``jacobian``."""
    J = np.asarray(jacobian, dtype=float)
    m = J.shape[1]
    out: dict = {}
    for idx, c in w.terms.items():
        p = len(idx)
        vals = c.value if isinstance(c, Jet) else c
        for jdx in combinations(range(m), p):
            minor = np.linalg.det(J[np.ix_(idx, jdx)]) if p else 1.0
            if minor == 0:
                continue
            term = vals * minor
            out[jdx] = out[jdx] + term if jdx in out else term
    return PolyForm(m, out, w.shape)


def gauge_transform(c: Connection, u: SmoothMatrixField) -> Connection:
    """``A_k -> u A_k u^-1 - (d_k u) u^-1``."""
    uinv = F.inverse(u, label="gauge")
    return Connection([u @ a @ uinv - F.partial(k, u) @ uinv for k, a in enumerate(c.A)], c.domain)


# -- subbundles --------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionField:
    P: SmoothMatrixField

    @property
    def ambient_rank(self) -> int:
        return self.P.shape[0]

    def residuals(self, samples) -> dict[str, float]:
        val = F.eval_jet(self.P, samples, 0).value
        tr = np.trace(val, axis1=-2, axis2=-1)
        return {
            "idempotent": float(np.max(np.abs(val @ val - val))),
            "hermitian": float(np.max(np.abs(val - np.conj(np.swapaxes(val, -1, -2))))),
            "trace_spread": float(np.max(np.abs(tr - np.round(tr.real[..., :1].mean())))),
        }

    def rank(self, samples) -> int:
        val = F.eval_jet(self.P, samples, 0).value
        return int(round(float(np.mean(np.trace(val, axis1=-2, axis2=-1).real))))

    def validate(self, samples, tol: float = 1e-10) -> None:
        res = self.residuals(samples)
        bad = {k: v for k, v in res.items() if v > tol}
        if bad:
            raise ProjectorError(f"not an orthogonal projection field: {bad}")


def coordinate_projection(domain: ChartDomain, ambient: int, indices: Sequence[int]) -> ProjectionField:
    d = np.zeros(ambient)
    d[list(indices)] = 1.0
    return ProjectionField(F.constant(np.diag(d), domain))


def frame_from_projection(P: ProjectionField, samples=None) -> SmoothMatrixField:
    """Orthonormal constant frame for a constant projection (pivoted QR)."""
    dom = P.P.domain
    pts = dom.sample(8, 0) if samples is None else samples
    jet = F.eval_jet(P.P, pts, 1)
    if jet.parts[1] is not None and np.max(np.abs(jet.parts[1])) > 1e-12:
        raise FrameError("automatic frames need a constant projection; supply a frame field")
    val = F.eval_jet(P.P, dom.center, 0).value
    rank = int(round(float(np.trace(val).real)))
    q, _, piv = scipy.linalg.qr(val, pivoting=True)
    return F.constant(q[:, :rank], dom)


def induce(P: ProjectionField, ambient: Connection, frame: SmoothMatrixField | None = None, samples=None, tol: float = 1e-10) -> Connection:
    """Connection induced on the image of ``P``: ``frame^H (d frame + A frame)``."""
    if frame is None:
        frame = frame_from_projection(P, samples)
    if frame.shape[0] != ambient.rank:
        raise FrameError("frame height differs from the ambient rank")
    pts = ambient.domain.sample(16, 0) if samples is None else samples
    E = F.eval_jet(frame, pts, 0).value
    Pv = F.eval_jet(P.P, pts, 0).value
    k = frame.shape[1]
    ortho = np.max(np.abs(np.conj(np.swapaxes(E, -1, -2)) @ E - np.eye(k)))
    if ortho > tol:
        raise FrameError(f"frame not orthonormal (residual {ortho:.3g})")
    inside = np.max(np.abs(Pv @ E - E))
    if inside > tol:
        raise FrameError(f"frame not inside the image of P (residual {inside:.3g})")
    if F.is_constant(frame):
        coeffs = [F.adjoint(frame) @ a @ frame for a in ambient.A]
    else:
        coeffs = [F.adjoint(frame) @ (F.partial(j, frame) + a @ frame) for j, a in enumerate(ambient.A)]
    return Connection(coeffs, ambient.domain)


@dataclass
class SSReport:
    """Residuals of the block-preservation hypotheses and their consequence."""

    block_residual_V: float
    block_residual_W: float
    ch_residual: float
    tol: float
    samples: int
    details: dict = field(default_factory=dict)

    @property
    def hypotheses_hold(self) -> bool:
        return max(self.block_residual_V, self.block_residual_W) <= self.tol

    @property
    def applicable(self) -> bool:
        return self.hypotheses_hold


def lemma_ss_check(
    ambient: Connection,
    P_V: ProjectionField,
    P_W: ProjectionField,
    samples,
    frame_V: SmoothMatrixField | None = None,
    frame_W: SmoothMatrixField | None = None,
    tol: float = 1e-8,
) -> SSReport:
    """Check curvature block preservation and compare ch of the split with ch of ``ambient``."""
    PV = F.eval_jet(P_V.P, samples, 0).value
    PW = F.eval_jet(P_W.P, samples, 0).value
    M = ambient.rank
    if PV.shape[-1] != M or PW.shape[-1] != M:
        raise ProjectorError("projection size differs from the ambient rank")
    split = float(np.max(np.abs(PV + PW - np.eye(M))))
    if split > 1e-10:
        raise ProjectorError(f"P_V + P_W != I (residual {split:.3g})")
    Fc = curvature(ambient, samples)
    I = np.eye(M)
    resV = resW = 0.0
    for c in Fc.terms.values():
        resV = max(resV, float(np.max(np.abs((I - PV) @ c @ PV))))
        resW = max(resW, float(np.max(np.abs((I - PW) @ c @ PW))))
    V = induce(P_V, ambient, frame_V, samples)
    W = induce(P_W, ambient, frame_W, samples)
    split_ch = chern_character(direct_sum(V, W), samples)
    amb_ch = chern_character(ambient, samples)
    ch_res = (split_ch - amb_ch).max_abs()
    return SSReport(resV, resW, ch_res, tol, int(np.asarray(samples).reshape(-1, ambient.n).shape[0]))
