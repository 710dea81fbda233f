"""Realizing a connection as a block of ``dg g^-1`` and its flat inverse pipeline.

Given ``A = sum_k A_k dx^k`` of rank ``r`` on a chart in R^n:

1. split each ``A_k = pos_k - neg_k`` with ``neg_k = 2I + A_k^H A_k`` and
   ``pos_k = neg_k + A_k`` (both positive definite in the sense
   ``v^H (B + B^H) v > 0``);
2. write ``A = sum_{j=1}^{2n} f_j dh_j`` using ``dx = e^-x d(e^x)`` and
   ``-dx = e^x d(e^-x)``;
3. assemble the ``(2n+2) r`` square matrix ``g`` whose first block row of
   ``dg`` is ``[dh_1 I ... dh_2n I 0 0]`` and whose first block column of
   ``g^-1`` is ``[f_1; ...; f_2n; -S; I]`` with ``S = sum_j h_j f_j``.

Under the curvature convention ``F = dA + A ^ A`` the gauge-trivial flat
connection is ``-dg g^-1``, so the flat ambient matrix is
``B = -dg~ g~^-1`` with ``g~`` built for ``-A``; its top-left block is ``+A``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fields as F
from .connections import (
    Connection,
    chern_character,
    coordinate_projection,
    curvature_jets,
    direct_sum,
    lemma_ss_check,
)
from .expr import Coord, Func, Neg
from .fields import ChartDomain, SmoothMatrixField
from .forms import FormField
from .jets import SingularMatrixError


class FlatteningError(ArithmeticError):
    """The assembled ``sum_k h_k f_k`` was singular at a sample point."""


@dataclass(frozen=True)
class PosDefSplit:
    pos: SmoothMatrixField
    neg: SmoothMatrixField

    def min_eigenvalues(self, samples) -> tuple[float, float]:
        """Smallest eigenvalue of ``B + B^H`` for ``pos`` and ``neg`` over samples."""
        out = []
        for f in (self.pos, self.neg):
            v = F.eval_jet(f, samples, 0).value
            out.append(float(np.min(np.linalg.eigvalsh(v + np.conj(np.swapaxes(v, -1, -2))))))
        return out[0], out[1]


def decompose_posdef(A_k: SmoothMatrixField) -> PosDefSplit:
    r, s = A_k.shape
    if r != s:
        raise F.ShapeError("decompose_posdef needs a square field")
    neg = F.scalar_mul(2.0, F.identity(r, A_k.domain)) + F.adjoint(A_k) @ A_k
    return PosDefSplit(pos=neg + A_k, neg=neg)


@dataclass(frozen=True)
class PairList:
    """``A = sum_j f_j dh_j`` with scalar ``h_j > 0``."""

    f: tuple[SmoothMatrixField, ...]
    h: tuple  # Expr
    domain: ChartDomain

    def __len__(self):
        return len(self.f)

    def h_fields(self) -> list[SmoothMatrixField]:
        return [F.scalar_field(h, self.domain) for h in self.h]

    def reconstruct(self, samples) -> np.ndarray:
        """``sum_j f_j d_k h_j`` as an array of shape ``(n,) + batch + (r, r)``."""
        fs = F.eval_jets(self.f, samples, 0)
        hs = F.eval_jets(self.h_fields(), samples, 1)
        return sum(hj.first * fj.value for fj, hj in zip(fs, hs))

    def min_h(self, samples) -> float:
        return min(float(np.min(j.value.real)) for j in F.eval_jets(self.h_fields(), samples, 0))

    def min_eig(self, samples) -> float:
        """Smallest eigenvalue of ``f_j + f_j^H`` over all pairs and samples."""
        vals = F.eval_jets(self.f, samples, 0)
        return min(float(np.min(np.linalg.eigvalsh(v.value + np.conj(np.swapaxes(v.value, -1, -2))))) for v in vals)


def build_pairs(c: Connection) -> PairList:
    """``f_{2k-1} = pos_k e^{-x_k}, h_{2k-1} = e^{x_k}; f_{2k} = neg_k e^{x_k}, h_{2k} = e^{-x_k}``."""
    dom = c.domain
    fs, hs = [], []
    for k, a in enumerate(c.A):
        split = decompose_posdef(a)
        up = Func("exp", Coord(k))
        down = Func("exp", Neg(Coord(k)))
        fs.append(F.scalar_mul(F.scalar_field(down, dom), split.pos))
        hs.append(up)
        fs.append(F.scalar_mul(F.scalar_field(up, dom), split.neg))
        hs.append(down)
    return PairList(tuple(fs), tuple(hs), dom)


def assemble_g(pairs: PairList, r: int, n: int) -> tuple[SmoothMatrixField, SmoothMatrixField]:
    """The block matrix ``g`` and the first block column of ``g^-1``."""
    dom = pairs.domain
    m = len(pairs)
    if m != 2 * n:
        raise ValueError(f"expected {2 * n} pairs, got {m}")
    I = F.identity(r, dom)
    Z = F.zeros(r, r, dom)
    hfs = pairs.h_fields()
    S = F.add(*(F.scalar_mul(h, f) for h, f in zip(hfs, pairs.f)))
    Sinv = F.inverse(S, label="sum_k h_k f_k")
    grid = [[F.scalar_mul(h, I) for h in hfs] + [I, I]]
    for k in range(m):
        row = [I if j == k else Z for j in range(m)]
        grid.append(row + [pairs.f[k] @ Sinv, Z])
    grid.append([Z] * m + [Sinv, I])
    g = F.block(grid)
    column = F.block([[f] for f in pairs.f] + [[-S], [I]])
    return g, column


def lemma_rank(n: int, r: int) -> int:
    return (2 * n + 2) * r


def rank_check(n: int, r: int) -> tuple[int, int]:
    """Ranks of the chart-level lemma and of the embedded construction."""
    if n < 1 or r < 1:
        raise ValueError("n and r must be positive")
    m_lemma = lemma_rank(n, r)
    m_prop = (4 * n + 8 * r + 2) * (n + 2 * r)
    # lemma applied to a rank-(n+2r) bundle over R^(2n+4r)
    assert m_prop == lemma_rank(2 * n + 4 * r, n + 2 * r)
    return m_lemma, m_prop


def _negated(c: Connection) -> Connection:
    return Connection([-a for a in c.A], c.domain)


@dataclass
class FlatPresentation:
    source: Connection
    g: SmoothMatrixField
    g_inv: SmoothMatrixField
    g_inv_column: SmoothMatrixField
    pairs: PairList
    transporter: SmoothMatrixField
    B: FormField

    @property
    def rank(self) -> int:
        return self.g.shape[0]

    @property
    def ambient(self) -> Connection:
        return Connection([self.B.terms[(k,)] for k in range(self.source.n)], self.source.domain)

    def certify(self, samples, order_flat: int = 2) -> dict[str, float]:
        """Residuals of every invariant of the presentation at ``samples``."""
        return certify_presentation(self, samples, order_flat)


def flatten(c: Connection) -> FlatPresentation:
    n, r = c.n, c.rank
    pairs = build_pairs(c)
    g, column = assemble_g(pairs, r, n)
    g_inv = F.inverse(g, label="g")
    tpairs = build_pairs(_negated(c))
    gt, _ = assemble_g(tpairs, r, n)
    gt_inv = F.inverse(gt, label="g~")
    B = FormField(n, {(k,): -(F.partial(k, gt) @ gt_inv) for k in range(n)})
    return FlatPresentation(c, g, g_inv, column, pairs, gt, B)


def _guard(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except SingularMatrixError as exc:
        raise FlatteningError(f"construction failure: {exc}") from exc


def lemma_identity_residual(fp: FlatPresentation, samples) -> float:
    """max |[d_k g g^-1]_{1..r,1..r} - A_k| over k and samples."""
    r = fp.source.rank
    g_jet, ginv_jet = _guard(F.eval_jets, [fp.g, fp.g_inv], samples, 1)
    dg = g_jet.first  # (n, batch, M, M)
    block = dg[..., :r, :] @ ginv_jet.value[..., :, :r]
    A = fp.source.values(samples)
    return float(np.max(np.abs(block - A)))


def certify_presentation(fp: FlatPresentation, samples, order_flat: int = 2) -> dict[str, float]:
    r = fp.source.rank
    M = fp.rank
    out = {}
    out["lemma_identity"] = lemma_identity_residual(fp, samples)
    gval = _guard(F.eval_jet, fp.g, samples, 0).value
    out["min_abs_det_g"] = float(np.min(np.abs(np.linalg.det(gval))))
    colv = F.eval_jet(fp.g_inv_column, samples, 0).value
    target = np.zeros((M, r))
    target[:r] = np.eye(r)
    out["g_inv_column"] = float(np.max(np.abs(gval @ colv - target)))
    recon = fp.pairs.reconstruct(samples)
    out["pair_reconstruction"] = float(np.max(np.abs(recon - fp.source.values(samples))))
    out["min_eig_f"] = fp.pairs.min_eig(samples)
    out["min_h"] = fp.pairs.min_h(samples)
    amb = fp.ambient
    Bv = amb.values(samples)
    out["ambient_top_block"] = float(np.max(np.abs(Bv[..., :r, :r] - fp.source.values(samples))))
    if order_flat:
        Fb = _guard(curvature_jets, amb, samples, 0)
        out["ambient_flatness"] = Fb.values().max_abs()
    return out


@dataclass
class InversePair:
    V_conn: Connection
    W_conn: Connection
    ambient: Connection
    transporter: SmoothMatrixField
    presentation: FlatPresentation
    report: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.ambient.rank


def structured_inverse(c: Connection) -> InversePair:
    """Complement ``W`` of ``V = span(e_1..e_r)`` inside the flat ambient."""
    fp = flatten(c)
    amb = fp.ambient
    r, M = c.rank, fp.rank
    W = Connection([F.submatrix(a, slice(r, M), slice(r, M)) for a in amb.A], c.domain)
    return InversePair(c, W, amb, fp.transporter, fp)


def inverse_residuals(pair: InversePair, samples, ss_tol: float = 1e-8) -> dict[str, float]:
    """ch cancellation, induced-block agreement and the block-preservation check."""
    c = pair.V_conn
    r, M = c.rank, pair.rank
    dom = c.domain
    chV = chern_character(c, samples)
    chW = chern_character(pair.W_conn, samples)
    total = chV + chW
    out = {}
    out["ch_degree0"] = float(np.max(np.abs(total.coeff(()) - M)))
    pos = [len(i) for i in total.terms if len(i) > 0]
    out["ch_positive"] = max((total.max_abs(p) for p in pos), default=0.0)
    Bv = pair.ambient.values(samples)
    out["induced_V"] = float(np.max(np.abs(Bv[..., :r, :r] - c.values(samples))))
    PV = coordinate_projection(dom, M, range(r))
    PW = coordinate_projection(dom, M, range(r, M))
    eV = F.constant(np.eye(M)[:, :r], dom)
    eW = F.constant(np.eye(M)[:, r:], dom)
    ss = _guard(lemma_ss_check, pair.ambient, PV, PW, samples, eV, eW, ss_tol)
    out["ss_block_V"] = ss.block_residual_V
    out["ss_block_W"] = ss.block_residual_W
    out["ss_ch"] = ss.ch_residual
    return out
