"""Smooth matrix-valued fields on chart domains.

Fields are immutable lazy trees.  :func:`eval_jet` walks the tree once per
call, memoizing shared sub-fields, and returns a :class:`~gaugeflat.jets.Jet`
holding the value and partial derivatives at one point or a batch of points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from . import jets
from .expr import Const, Expr, parse_expr
from .jets import Jet, SingularMatrixError

DEFAULT_MAX_ORDER = 2
# Hard ceiling for internal requests (partial nodes raise the order they ask for).
ENGINE_MAX_ORDER = 5


class JetOrderError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ChartDomain:
    """An axis-aligned box in R^n."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.bounds) < 1:
            raise ValueError("chart dimension must be >= 1")
        object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))
        for lo, hi in self.bounds:
            if not lo <= hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")

    @classmethod
    def box(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "ChartDomain":
        return cls(tuple((lo, hi) for _ in range(n)))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, count: int = 100, seed: int = 0) -> np.ndarray:
        """Deterministic scrambled-Halton points inside the box, shape (count, n)."""
        u = qmc.Halton(d=self.dim, scramble=True, seed=seed).random(count)
        return self.lower + u * (self.upper - self.lower)


class SmoothMatrixField:
    """Base class for lazily composed matrix-valued fields."""

    domain: ChartDomain
    shape: tuple[int, int]

    def _jet(self, ev: "_Evaluator", order: int) -> Jet:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        return self.domain.dim

    # operator sugar over the field algebra
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scalar_mul(-1.0, other))

    def __neg__(self):
        return scalar_mul(-1.0, self)

    def __matmul__(self, other):
        return mul(self, other)

    def __mul__(self, c):
        return scalar_mul(c, self)

    __rmul__ = __mul__

    @property
    def H(self):
        return adjoint(self)

    @property
    def T(self):
        return transpose(self)

    def __getitem__(self, key):
        rows, cols = key
        return submatrix(self, rows, cols)

    def describe(self) -> str:
        return f"{type(self).__name__}{self.shape}"


class _Evaluator:
    def __init__(self, x: np.ndarray):
        self.x = x
        self.memo: dict[tuple[int, int], Jet] = {}

    def __call__(self, f: SmoothMatrixField, order: int) -> Jet:
        if order > ENGINE_MAX_ORDER:
            raise JetOrderError(f"internal jet order {order} exceeds engine limit {ENGINE_MAX_ORDER}")
        key = (id(f), order)
        hit = self.memo.get(key)
        if hit is None:
            for m in range(order + 1, ENGINE_MAX_ORDER + 1):
                higher = self.memo.get((id(f), m))
                if higher is not None:
                    hit = higher.truncate(order)
                    break
            else:
                hit = f._jet(self, order)
            self.memo[key] = hit
        return hit


def eval_jet(f: SmoothMatrixField, x, order: int = 0, max_order: int = DEFAULT_MAX_ORDER) -> Jet:
    """Evaluate ``f`` with partial derivatives up to ``order`` at ``x``.

    ``x`` is a point of shape ``(n,)`` or a batch ``(..., n)``.
    """
    if order < 0 or order > max_order:
        raise JetOrderError(f"jet order {order} outside 0..{max_order}")
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (f.dim,):
        raise ShapeError(f"point shape {x.shape} does not match dimension {f.dim}")
    if not f.domain.contains(x):
        raise OutOfDomainError(f"point(s) outside the chart {f.domain.bounds}")
    return _Evaluator(x)(f, order)


# -- leaf fields -----------------------------------------------------------


class ExprField(SmoothMatrixField):
    """Entrywise grid of scalar expressions."""

    def __init__(self, entries: Sequence[Sequence[Expr]], domain: ChartDomain):
        self.entries = tuple(tuple(row) for row in entries)
        rows = len(self.entries)
        cols = len(self.entries[0]) if rows else 0
        if rows == 0 or cols == 0 or any(len(r) != cols for r in self.entries):
            raise ShapeError("ragged or empty expression grid")
        self.domain = domain
        self.shape = (rows, cols)

    @classmethod
    def parse(cls, sources, domain: ChartDomain) -> "ExprField":
        if isinstance(sources, str):
            sources = [[sources]]
        return cls([[parse_expr(str(s), domain) for s in row] for row in sources], domain)

    def _jet(self, ev, order):
        grid = [[e.jet(ev.x, order) for e in row] for row in self.entries]
        return jets.block(grid)


class ConstantField(SmoothMatrixField):
    def __init__(self, matrix, domain: ChartDomain):
        m = np.array(matrix, dtype=complex)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2:
            raise ShapeError("constant field must be a matrix")
        m.setflags(write=False)
        self.matrix = m
        self.domain = domain
        self.shape = m.shape

    def _jet(self, ev, order):
        val = np.broadcast_to(self.matrix, ev.x.shape[:-1] + self.shape).copy()
        return Jet.constant(val, self.dim, order)


def constant(matrix, domain: ChartDomain) -> ConstantField:
    return ConstantField(matrix, domain)


def identity(r: int, domain: ChartDomain) -> ConstantField:
    return ConstantField(np.eye(r), domain)


def zeros(rows: int, cols: int, domain: ChartDomain) -> ConstantField:
    return ConstantField(np.zeros((rows, cols)), domain)


def scalar_field(expr: Expr | str, domain: ChartDomain) -> ExprField:
    if isinstance(expr, str):
        expr = parse_expr(expr, domain)
    return ExprField([[expr]], domain)


# -- composites ------------------------------------------------------------


def _same_domain(*fields: SmoothMatrixField) -> ChartDomain:
    dom = fields[0].domain
    for f in fields[1:]:
        if f.domain != dom:
            raise ShapeError("fields live on different chart domains")
    return dom


class SumField(SmoothMatrixField):
    def __init__(self, terms: Sequence[SmoothMatrixField]):
        self.terms = tuple(terms)
        self.domain = _same_domain(*self.terms)
        shapes = {t.shape for t in self.terms}
        if len(shapes) != 1:
            raise ShapeError(f"sum of mismatched shapes {sorted(shapes)}")
        self.shape = self.terms[0].shape

    def _jet(self, ev, order):
        out = ev(self.terms[0], order)
        for t in self.terms[1:]:
            out = out + ev(t, order)
        return out


class ProductField(SmoothMatrixField):
    def __init__(self, a: SmoothMatrixField, b: SmoothMatrixField):
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
        self.a, self.b = a, b
        self.domain = _same_domain(a, b)
        self.shape = (a.shape[0], b.shape[1])

    def _jet(self, ev, order):
        return ev(self.a, order) @ ev(self.b, order)


class ScaledField(SmoothMatrixField):
    """``s * f`` for a complex constant or a 1x1 scalar field ``s``."""

    def __init__(self, scale, f: SmoothMatrixField):
        if isinstance(scale, SmoothMatrixField):
            if scale.shape != (1, 1):
                raise ShapeError("scalar factor must be a 1x1 field")
            _same_domain(scale, f)
        else:
            scale = complex(scale)
        self.scale = scale
        self.f = f
        self.domain = f.domain
        self.shape = f.shape

    def _jet(self, ev, order):
        base = ev(self.f, order)
        if isinstance(self.scale, SmoothMatrixField):
            return ev(self.scale, order) * base
        return base * self.scale


class AdjointField(SmoothMatrixField):
    def __init__(self, f):
        self.f = f
        self.domain = f.domain
        self.shape = (f.shape[1], f.shape[0])

    def _jet(self, ev, order):
        return ev(self.f, order).adjoint()


class TransposeField(SmoothMatrixField):
    def __init__(self, f):
        self.f = f
        self.domain = f.domain
        self.shape = (f.shape[1], f.shape[0])

    def _jet(self, ev, order):
        return ev(self.f, order).transpose()


class InverseField(SmoothMatrixField):
    def __init__(self, f, label: str | None = None):
        if f.shape[0] != f.shape[1]:
            raise ShapeError(f"inverse of non-square field {f.shape}")
        self.f = f
        self.label = label
        self.domain = f.domain
        self.shape = f.shape

    def describe(self):
        return f"inverse({self.label or self.f.describe()})"

    def _jet(self, ev, order):
        base = ev(self.f, order)
        try:
            return jets.inverse(base)
        except SingularMatrixError as exc:
            pts = ev.x.reshape(-1, self.dim)
            where = pts if exc.points is None or len(exc.points) == 0 else pts[np.ravel(exc.points)[: 5]]
            raise SingularMatrixError(
                f"{exc} at node {self.describe()}, x = {np.round(where, 12).tolist()}", exc.points
            ) from None


class BlockField(SmoothMatrixField):
    def __init__(self, grid: Sequence[Sequence[SmoothMatrixField]]):
        self.grid = tuple(tuple(row) for row in grid)
        flat = [f for row in self.grid for f in row]
        if not flat:
            raise ShapeError("empty block grid")
        self.domain = _same_domain(*flat)
        ncols = len(self.grid[0])
        if any(len(row) != ncols for row in self.grid):
            raise ShapeError("ragged block grid")
        heights = []
        for row in self.grid:
            hs = {f.shape[0] for f in row}
            if len(hs) != 1:
                raise ShapeError("blocks in a row differ in height")
            heights.append(hs.pop())
        widths = []
        for j in range(ncols):
            ws = {row[j].shape[1] for row in self.grid}
            if len(ws) != 1:
                raise ShapeError("blocks in a column differ in width")
            widths.append(ws.pop())
        self.shape = (sum(heights), sum(widths))

    def _jet(self, ev, order):
        return jets.block([[ev(f, order) for f in row] for row in self.grid])


class PartialField(SmoothMatrixField):
    def __init__(self, k: int, f: SmoothMatrixField):
        if not 0 <= k < f.dim:
            raise ValueError(f"partial index {k} outside 0..{f.dim - 1}")
        self.k = k
        self.f = f
        self.domain = f.domain
        self.shape = f.shape

    def _jet(self, ev, order):
        return ev(self.f, order + 1).partial(self.k)


class SubmatrixField(SmoothMatrixField):
    def __init__(self, f: SmoothMatrixField, rows: slice, cols: slice):
        self.f = f
        self.rows, self.cols = rows, cols
        self.domain = f.domain
        nr = len(range(*rows.indices(f.shape[0])))
        nc = len(range(*cols.indices(f.shape[1])))
        if nr == 0 or nc == 0:
            raise ShapeError("empty submatrix")
        self.shape = (nr, nc)

    def _jet(self, ev, order):
        return ev(self.f, order).submatrix(self.rows, self.cols)


class TraceField(SmoothMatrixField):
    def __init__(self, f):
        if f.shape[0] != f.shape[1]:
            raise ShapeError("trace of non-square field")
        self.f = f
        self.domain = f.domain
        self.shape = (1, 1)

    def _jet(self, ev, order):
        return ev(self.f, order).trace()


# -- the field algebra ------------------------------------------------------


def add(*fields: SmoothMatrixField) -> SmoothMatrixField:
    return SumField(fields)


def mul(*fields: SmoothMatrixField) -> SmoothMatrixField:
    out = fields[0]
    for f in fields[1:]:
        out = ProductField(out, f)
    return out


def adjoint(f: SmoothMatrixField) -> SmoothMatrixField:
    return AdjointField(f)


def transpose(f: SmoothMatrixField) -> SmoothMatrixField:
    return TransposeField(f)


def inverse(f: SmoothMatrixField, label: str | None = None) -> SmoothMatrixField:
    return InverseField(f, label)


def block(grid: Sequence[Sequence[SmoothMatrixField]]) -> SmoothMatrixField:
    return BlockField(grid)


def scalar_mul(scale, f: SmoothMatrixField) -> SmoothMatrixField:
    return ScaledField(scale, f)


def partial(k: int, f: SmoothMatrixField) -> SmoothMatrixField:
    """Field of the partial derivative along coordinate ``k`` (0-based)."""
    return PartialField(k, f)


def submatrix(f: SmoothMatrixField, rows, cols) -> SmoothMatrixField:
    if isinstance(rows, int):
        rows = slice(rows, rows + 1)
    if isinstance(cols, int):
        cols = slice(cols, cols + 1)
    return SubmatrixField(f, rows, cols)


def trace(f: SmoothMatrixField) -> SmoothMatrixField:
    return TraceField(f)


def block_diag(*fields: SmoothMatrixField) -> SmoothMatrixField:
    dom = _same_domain(*fields)
    grid = []
    for i, fi in enumerate(fields):
        row = []
        for j, fj in enumerate(fields):
            row.append(fi if i == j else zeros(fi.shape[0], fj.shape[1], dom))
        grid.append(row)
    return BlockField(grid)


def is_constant(f: SmoothMatrixField) -> bool:
    if isinstance(f, ConstantField):
        return True
    if isinstance(f, ExprField):
        return all(isinstance(e, Const) for row in f.entries for e in row)
    return False


def eval_jets(fs: Sequence[SmoothMatrixField], x, order: int = 0, max_order: int = DEFAULT_MAX_ORDER) -> list[Jet]:
    """Evaluate several fields at the same points, sharing common sub-fields."""
    if order < 0 or order > max_order:
        raise JetOrderError(f"jet order {order} outside 0..{max_order}")
    x = np.asarray(x, dtype=float)
    for f in fs:
        if x.shape[-1:] != (f.dim,):
            raise ShapeError(f"point shape {x.shape} does not match dimension {f.dim}")
        if not f.domain.contains(x):
            raise OutOfDomainError(f"point(s) outside the chart {f.domain.bounds}")
    ev = _Evaluator(x)
    return [ev(f, order) for f in fs]


class PullbackField(SmoothMatrixField):
    """``f(J y + b)`` for an affine map from a chart in R^m into ``f``'s chart."""

    def __init__(self, f: SmoothMatrixField, jacobian, offset, domain: ChartDomain):
        J = np.asarray(jacobian, dtype=float)
        if J.shape != (f.dim, domain.dim):
            raise ShapeError(f"jacobian shape {J.shape} != ({f.dim}, {domain.dim})")
        self.f = f
        self.jacobian = J
        self.offset = np.asarray(offset, dtype=float)
        self.domain = domain
        self.shape = f.shape

    def _jet(self, ev, order):
        y = ev.x
        x = y @ self.jacobian.T + self.offset
        if not self.f.domain.contains(x):
            raise OutOfDomainError("affine image leaves the target chart")
        base = _Evaluator(x)(self.f, order)
        m = self.domain.dim
        parts = []
        for k, p in enumerate(base.parts):
            if p is None or k == 0:
                parts.append(p)
                continue
            for axis in range(k):
                # contract derivative axis `axis` with J[:, j]
                p = np.moveaxis(np.tensordot(self.jacobian, p, axes=([0], [axis])), 0, axis)
            parts.append(p)
        return Jet(parts, m)
