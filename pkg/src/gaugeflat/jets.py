"""Truncated multivariate Taylor jets of matrix-valued functions.

A :class:`Jet` stores the value and all partial derivatives up to a fixed
order at a batch of points.  Slot ``m`` holds an array of shape
``(n,)*m + batch + (rows, cols)``; the ``m`` leading axes index the
differentiation directions.  ``None`` in a slot means the slot is
identically zero, which keeps constants and low-degree polynomials cheap.

Higher slots are symmetric in their derivative axes *exactly*: every
operation computes the full tensor and then copies each entry from its
sorted-index representative.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


class SingularMatrixError(ArithmeticError):
    """Raised when a jet inverse meets a (numerically) singular matrix."""

    def __init__(self, message: str, points: np.ndarray | None = None):
        super().__init__(message)
        self.points = points


# 1-norm condition numbers beyond this are treated as singular.
SINGULAR_COND = 1e15


@lru_cache(maxsize=None)
def _canonical_index(n: int, m: int) -> np.ndarray:
    idx = np.indices((n,) * m).reshape(m, -1)
    srt = np.sort(idx, axis=0)
    return np.ravel_multi_index(tuple(srt), (n,) * m)


def symmetrize(arr: np.ndarray, m: int, n: int) -> np.ndarray:
    """Copy every entry of the first ``m`` axes from its sorted index."""
    if m < 2:
        return arr
    rest = arr.shape[m:]
    flat = arr.reshape((n**m,) + rest)
    return flat[_canonical_index(n, m)].reshape(arr.shape)


def _place(arr: np.ndarray, positions: Sequence[int], m: int) -> np.ndarray:
    """Spread the derivative axes of ``arr`` onto ``positions`` out of ``m``."""
    b = len(positions)
    if b == m:
        return arr
    arr = arr.reshape((1,) * (m - b) + arr.shape)
    return np.moveaxis(arr, list(range(m - b, m)), list(positions))


@lru_cache(maxsize=None)
def _subsets(m: int) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]:
    out = []
    pos = range(m)
    for k in range(m + 1):
        for sub in itertools.combinations(pos, k):
            comp = tuple(p for p in pos if p not in sub)
            out.append((sub, comp))
    return tuple(out)


def _partitions(items: tuple[int, ...]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [(first,) + part[i]] + part[i + 1:]
        yield [(first,)] + part


@lru_cache(maxsize=None)
def _set_partitions(m: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    return tuple(tuple(p) for p in _partitions(tuple(range(m))))


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


class Jet:
    """Jet of a matrix-valued function at a batch of points."""

    __slots__ = ("parts", "n")
    # Let numpy defer to the reflected operators below.
    __array_ufunc__ = None

    def __init__(self, parts: list, n: int):
        if parts[0] is None:
            raise ValueError("jet value slot cannot be None")
        self.parts = list(parts)
        self.n = n

    # -- construction ---------------------------------------------------
    @classmethod
    def constant(cls, value: np.ndarray, n: int, order: int) -> "Jet":
        return cls([np.asarray(value, dtype=complex)] + [None] * order, n)

    # -- accessors ------------------------------------------------------
    @property
    def order(self) -> int:
        return len(self.parts) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.parts[0].shape[-2:]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.parts[0].shape[:-2]

    def part(self, m: int) -> np.ndarray:
        """Slot ``m`` with zeros materialized."""
        p = self.parts[m]
        if p is None:
            return np.zeros((self.n,) * m + self.parts[0].shape, dtype=complex)
        return p

    @property
    def value(self) -> np.ndarray:
        return self.parts[0]

    @property
    def first(self) -> np.ndarray:
        return self.part(1)

    @property
    def second(self) -> np.ndarray:
        return self.part(2)

    @property
    def third(self) -> np.ndarray:
        return self.part(3)

    def entry(self, i: int, j: int, point: int | None = None) -> "JetValue":
        """Scalar view of one matrix entry (at one batch point)."""
        sel = (Ellipsis, i, j) if point is None else (Ellipsis, point, i, j)

        def grab(m):
            if m > self.order:
                return None
            return self.part(m)[sel]

        return JetValue(grab(0), grab(1), grab(2), grab(3))

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.parts[: order + 1], self.n)

    def partial(self, k: int) -> "Jet":
        """Jet of the partial derivative in direction ``k`` (one order lower)."""
        if self.order < 1:
            raise ValueError("partial of an order-0 jet")
        parts = [None if p is None else p[k] for p in self.parts[1:]]
        if parts[0] is None:
            parts[0] = np.zeros(self.parts[0].shape, dtype=complex)
        return Jet(parts, self.n)

    def map_parts(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Jet":
        return Jet([None if p is None else fn(p) for p in self.parts], self.n)

    # -- linear structure ----------------------------------------------
    def _check(self, other: "Jet"):
        if self.n != other.n:
            raise ValueError("jets over different dimensions")

    def __add__(self, other):
        if isinstance(other, np.ndarray):
            return Jet([self.parts[0] + other] + self.parts[1:], self.n)
        if not isinstance(other, Jet):
            return NotImplemented
        self._check(other)
        m = min(self.order, other.order)
        return Jet([_add(a, b) for a, b in zip(self.parts[: m + 1], other.parts[: m + 1])], self.n)

    def __neg__(self):
        return self.map_parts(np.negative)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, (Jet, np.ndarray)):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return leibniz(self, other, np.multiply)
        c = complex(other)
        return self.map_parts(lambda p: c * p)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            return self.map_parts(lambda p: p @ other)
        if not isinstance(other, Jet):
            return NotImplemented
        return leibniz(self, other, np.matmul)

    def __rmatmul__(self, other):
        if isinstance(other, np.ndarray):
            return self.map_parts(lambda p: other @ p)
        return NotImplemented

    def adjoint(self) -> "Jet":
        return self.map_parts(lambda p: np.conj(np.swapaxes(p, -1, -2)))

    def transpose(self) -> "Jet":
        return self.map_parts(lambda p: np.swapaxes(p, -1, -2))

    def trace(self) -> "Jet":
        return self.map_parts(lambda p: np.trace(p, axis1=-2, axis2=-1)[..., None, None])

    def submatrix(self, rows: slice, cols: slice) -> "Jet":
        return self.map_parts(lambda p: p[..., rows, cols])

    def inverse(self) -> "Jet":
        return inverse(self)

    def __repr__(self):
        return f"Jet(order={self.order}, n={self.n}, batch={self.batch_shape}, shape={self.shape})"


@dataclass(frozen=True)
class JetValue:
    """Value and partials of a single scalar entry."""

    value: complex | np.ndarray
    first: np.ndarray | None = None
    second: np.ndarray | None = None
    third: np.ndarray | None = None


def leibniz(a: Jet, b: Jet, op=np.matmul) -> Jet:
    """Product rule for ``op`` (matmul or elementwise multiply)."""
    a._check(b)
    n = a.n
    order = min(a.order, b.order)
    parts = []
    for m in range(order + 1):
        acc = None
        for sub, comp in _subsets(m):
            pa, pb = a.parts[len(sub)], b.parts[len(comp)]
            if pa is None or pb is None:
                continue
            acc = _add(acc, op(_place(pa, sub, m), _place(pb, comp, m)))
        parts.append(None if acc is None else symmetrize(acc, m, n))
    return Jet(parts, n)


def compose(u: Jet, derivs: Sequence[np.ndarray]) -> Jet:
    """Elementwise ``phi(u)`` given ``derivs[j] = phi^(j)(u.value)``.

    Faa di Bruno over set partitions of the derivative positions.
    """
    n = u.n
    parts = [np.asarray(derivs[0], dtype=complex)]
    for m in range(1, u.order + 1):
        acc = None
        for blocks in _set_partitions(m):
            factors = [u.parts[len(blk)] for blk in blocks]
            if any(f is None for f in factors):
                continue
            term = derivs[len(blocks)]
            for blk, f in zip(blocks, factors):
                term = term * _place(f, blk, m)
            acc = _add(acc, term)
        if acc is not None:
            acc = np.broadcast_to(acc, (n,) * m + parts[0].shape)
            acc = symmetrize(np.ascontiguousarray(acc), m, n)
        parts.append(acc)
    return Jet(parts, n)


def _batched_inverse(g: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        bad = _singular_points(g)
        raise SingularMatrixError("singular matrix in jet inverse", bad) from None
    cond = np.linalg.norm(g, 1, axis=(-2, -1)) * np.linalg.norm(inv, 1, axis=(-2, -1))
    bad = ~np.isfinite(cond) | (cond > SINGULAR_COND)
    if np.any(bad):
        raise SingularMatrixError(
            f"matrix numerically singular (1-norm condition {np.max(np.where(np.isfinite(cond), cond, np.inf)):.3g})",
            np.argwhere(np.atleast_1d(bad)),
        )
    return inv


def _singular_points(g: np.ndarray) -> np.ndarray:
    flat = g.reshape((-1,) + g.shape[-2:])
    bad = []
    for i, mat in enumerate(flat):
        try:
            np.linalg.inv(mat)
        except np.linalg.LinAlgError:
            bad.append(i)
    return np.array(bad, dtype=int)


def inverse(g: Jet) -> Jet:
    """Jet of the matrix inverse.

    Value by LU (LAPACK), higher slots from differentiating ``g G = I``:
    ``G_S = -G sum_{T nonempty} g_T G_{S minus T}``.
    """
    rows, cols = g.shape
    if rows != cols:
        raise ValueError(f"inverse of non-square {rows}x{cols} jet")
    n = g.n
    g0inv = _batched_inverse(g.parts[0])
    parts = [g0inv]
    for m in range(1, g.order + 1):
        acc = None
        for sub, comp in _subsets(m):
            if not sub:
                continue
            pg, pG = g.parts[len(sub)], parts[len(comp)]
            if pg is None or pG is None:
                continue
            acc = _add(acc, _place(pg, sub, m) @ _place(pG, comp, m))
        if acc is not None:
            acc = symmetrize(-(g0inv @ acc), m, n)
        parts.append(acc)
    return Jet(parts, n)


def block(grid: Sequence[Sequence[Jet]]) -> Jet:
    """Assemble a block matrix of jets (all blocks in a row share a height)."""
    first = grid[0][0]
    n = first.n
    order = min(j.order for row in grid for j in row)
    parts = []
    for m in range(order + 1):
        if m > 0 and all(j.parts[m] is None for row in grid for j in row):
            parts.append(None)
            continue
        rows = [np.concatenate([j.part(m) for j in row], axis=-1) for row in grid]
        parts.append(np.concatenate(rows, axis=-2))
    return Jet(parts, n)


def factorial_falling(p: int, j: int) -> int:
    out = 1
    for i in range(j):
        out *= p - i
    return out


__all__ = [
    "Jet",
    "JetValue",
    "SingularMatrixError",
    "block",
    "compose",
    "inverse",
    "leibniz",
    "symmetrize",
    "factorial_falling",
]
