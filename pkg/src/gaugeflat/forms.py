"""Matrix-valued differential forms on a chart.

:class:`PolyForm` is a pointwise value: a sparse map from strictly increasing
index tuples to coefficients.  Coefficients are arrays of shape
``batch + (r, s)`` or :class:`~gaugeflat.jets.Jet` objects; the jet variant
carries derivatives so :meth:`PolyForm.d` can differentiate exactly.

:class:`FormField` is the lazy counterpart with
:class:`~gaugeflat.fields.SmoothMatrixField` coefficients.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Mapping

import numpy as np

from . import fields as F
from .fields import SmoothMatrixField, eval_jet
from .jets import Jet

Index = tuple[int, ...]


class FormError(ValueError):
    pass


@lru_cache(maxsize=None)
def merge_indices(a: Index, b: Index) -> tuple[Index, int] | None:
    """``dx^a ^ dx^b = sign dx^K``; returns ``(K, sign)`` or None if they overlap."""
    if set(a) & set(b):
        return None
    seq = a + b
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return tuple(sorted(seq)), (-1) ** inversions


def _check_index(idx: Index, n: int):
    if any(i < 0 or i >= n for i in idx) or any(idx[i] >= idx[i + 1] for i in range(len(idx) - 1)):
        raise FormError(f"index tuple {idx} is not strictly increasing in 0..{n - 1}")


def _coeff_shape(c) -> tuple[int, int]:
    return c.shape if isinstance(c, Jet) else c.shape[-2:]


def _as_coeff(c):
    if isinstance(c, Jet):
        return c
    c = np.asarray(c, dtype=complex)
    if c.ndim < 2:
        c = c.reshape(c.shape + (1, 1))
    return c


def _absmax(c) -> float:
    v = c.value if isinstance(c, Jet) else c
    return float(np.max(np.abs(v))) if v.size else 0.0


class PolyForm:
    """Graded sum of matrix-valued forms at a point (or a batch of points)."""

    __slots__ = ("n", "terms", "shape")

    def __init__(self, n: int, terms: Mapping[Index, object] | None = None, shape: tuple[int, int] | None = None):
        self.n = n
        self.terms: dict[Index, object] = {}
        for idx, c in (terms or {}).items():
            idx = tuple(int(i) for i in idx)
            _check_index(idx, n)
            self.terms[idx] = _as_coeff(c)
        shapes = {_coeff_shape(c) for c in self.terms.values()}
        if shape is not None:
            shapes.add(tuple(shape))
        if len(shapes) > 1:
            raise FormError(f"coefficients of mixed shapes {sorted(shapes)}")
        self.shape = shapes.pop() if shapes else (1, 1)

    @classmethod
    def zero(cls, n: int, shape=(1, 1)) -> "PolyForm":
        return cls(n, {}, shape)

    # -- inspection ------------------------------------------------------
    @property
    def degrees(self) -> list[int]:
        return sorted({len(i) for i in self.terms})

    def degree(self, p: int) -> "PolyForm":
        return PolyForm(self.n, {i: c for i, c in self.terms.items() if len(i) == p}, self.shape)

    def coeff(self, idx: Index):
        """Coefficient of ``idx`` as an array (zeros if absent)."""
        c = self.terms.get(tuple(idx))
        if c is None:
            return np.zeros(self.shape, dtype=complex)
        return c.value if isinstance(c, Jet) else c

    def max_abs(self, degree: int | None = None) -> float:
        vals = [_absmax(c) for i, c in self.terms.items() if degree is None or len(i) == degree]
        return max(vals, default=0.0)

    def values(self) -> "PolyForm":
        """Drop derivative information from jet coefficients."""
        return PolyForm(self.n, {i: (c.value if isinstance(c, Jet) else c) for i, c in self.terms.items()}, self.shape)

    def __repr__(self):
        return f"PolyForm(n={self.n}, shape={self.shape}, terms={sorted(self.terms)})"

    # -- linear structure --------------------------------------------------
    def _compat(self, other: "PolyForm"):
        if self.n != other.n:
            raise FormError("forms over different dimensions")
        if self.shape != other.shape:
            raise FormError(f"shape mismatch {self.shape} vs {other.shape}")

    def __add__(self, other: "PolyForm") -> "PolyForm":
        self._compat(other)
        out = dict(self.terms)
        for i, c in other.terms.items():
            out[i] = out[i] + c if i in out else c
        return PolyForm(self.n, out, self.shape)

    def __neg__(self):
        return PolyForm(self.n, {i: -c for i, c in self.terms.items()}, self.shape)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scale):
        s = complex(scale)
        return PolyForm(self.n, {i: c * s for i, c in self.terms.items()}, self.shape)

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    # -- calculus ------------------------------------------------------------
    def d(self) -> "PolyForm":
        """Exterior derivative of a jet-valued form (result is one jet order lower)."""
        out: dict[Index, object] = {}
        for idx, c in self.terms.items():
            if not isinstance(c, Jet):
                raise FormError("exterior derivative needs jet coefficients")
            if c.order < 1:
                raise FormError("exterior derivative needs jets of order >= 1")
            for k in range(self.n):
                if k in idx:
                    continue
                if c.parts[1] is None:
                    continue
                key, sign = merge_indices((k,), idx)
                term = c.partial(k) * sign
                out[key] = out[key] + term if key in out else term
        return PolyForm(self.n, out, self.shape)


def wedge(a, b):
    """Wedge product with matrix multiplication of coefficients."""
    if isinstance(a, FormField) and isinstance(b, FormField):
        return _wedge_fields(a, b)
    if not isinstance(a, PolyForm) or not isinstance(b, PolyForm):
        raise TypeError("wedge needs two PolyForms or two FormFields")
    if a.n != b.n:
        raise FormError("forms over different dimensions")
    if a.shape[1] != b.shape[0]:
        raise FormError(f"cannot compose coefficient shapes {a.shape} and {b.shape}")
    out: dict[Index, object] = {}
    for i, ca in a.terms.items():
        for j, cb in b.terms.items():
            m = merge_indices(i, j)
            if m is None:
                continue
            k, sign = m
            prod = ca @ cb
            if sign < 0:
                prod = -prod
            out[k] = out[k] + prod if k in out else prod
    return PolyForm(a.n, out, (a.shape[0], b.shape[1]))


def trace(w: PolyForm) -> PolyForm:
    if w.shape[0] != w.shape[1]:
        raise FormError(f"trace of non-square coefficients {w.shape}")
    out = {}
    for i, c in w.terms.items():
        out[i] = c.trace() if isinstance(c, Jet) else np.trace(c, axis1=-2, axis2=-1)[..., None, None]
    return PolyForm(w.n, out, (1, 1))


def identity_form(n: int, r: int, like=None) -> PolyForm:
    """The 0-form I_r; jet-valued if ``like`` is a jet coefficient."""
    eye = np.eye(r, dtype=complex)
    if isinstance(like, Jet):
        val = np.broadcast_to(eye, like.batch_shape + (r, r)).copy()
        return PolyForm(n, {(): Jet.constant(val, n, like.order)}, (r, r))
    if like is not None:
        return PolyForm(n, {(): np.broadcast_to(eye, like.shape[:-2] + (r, r)).copy()}, (r, r))
    return PolyForm(n, {(): eye}, (r, r))


def exp_truncated(w: PolyForm) -> PolyForm:
    """``I + w + w^2/2! + ...`` for a form of even degrees >= 2 (finite sum)."""
    bad = [p for p in w.degrees if p % 2 or p == 0]
    if bad:
        raise FormError(f"exp_truncated needs even degrees >= 2, got degrees {bad}")
    r = w.shape[0]
    like = next(iter(w.terms.values()), None)
    out = identity_form(w.n, r, like)
    power = None
    for k in range(1, w.n // 2 + 1):
        power = w if power is None else wedge(power, w)
        if not power.terms:
            break
        out = out + power * (1.0 / math.factorial(k))
    return out


class FormField:
    """Lazy matrix-valued form with smooth field coefficients."""

    def __init__(self, n: int, terms: Mapping[Index, SmoothMatrixField], shape: tuple[int, int] | None = None):
        self.n = n
        self.terms = {}
        for idx, f in terms.items():
            idx = tuple(idx)
            _check_index(idx, n)
            if f.dim != n:
                raise FormError("coefficient field on a chart of the wrong dimension")
            self.terms[idx] = f
        shapes = {f.shape for f in self.terms.values()}
        if shape is not None:
            shapes.add(tuple(shape))
        if len(shapes) > 1:
            raise FormError(f"coefficients of mixed shapes {sorted(shapes)}")
        self.shape = shapes.pop() if shapes else (1, 1)

    @classmethod
    def one_form(cls, coefficients) -> "FormField":
        """``sum_k coefficients[k] dx^k``."""
        return cls(coefficients[0].dim, {(k,): c for k, c in enumerate(coefficients)})

    @property
    def degrees(self) -> list[int]:
        return sorted({len(i) for i in self.terms})

    def evaluate(self, x, order: int = 0, max_order: int = F.DEFAULT_MAX_ORDER) -> PolyForm:
        """Jet-valued pointwise form."""
        return PolyForm(self.n, {i: eval_jet(f, x, order, max_order) for i, f in self.terms.items()}, self.shape)

    def at(self, x) -> PolyForm:
        return self.evaluate(x, 0).values()

    def d(self) -> "FormField":
        """Lazy exterior derivative built from partial-derivative nodes."""
        acc: dict[Index, list] = {}
        for idx, f in self.terms.items():
            for k in range(self.n):
                if k in idx:
                    continue
                key, sign = merge_indices((k,), idx)
                acc.setdefault(key, []).append(F.scalar_mul(sign, F.partial(k, f)))
        return FormField(self.n, {k: (v[0] if len(v) == 1 else F.add(*v)) for k, v in acc.items()}, self.shape)

    def __add__(self, other: "FormField") -> "FormField":
        acc: dict[Index, list] = {}
        for w in (self, other):
            for i, f in w.terms.items():
                acc.setdefault(i, []).append(f)
        return FormField(self.n, {k: (v[0] if len(v) == 1 else F.add(*v)) for k, v in acc.items()}, self.shape)

    def __neg__(self):
        return FormField(self.n, {i: F.scalar_mul(-1.0, f) for i, f in self.terms.items()}, self.shape)

    def __sub__(self, other):
        return self + (-other)

    def __xor__(self, other):
        return wedge(self, other)


def _wedge_fields(a: FormField, b: FormField) -> FormField:
    if a.n != b.n:
        raise FormError("forms over different dimensions")
    if a.shape[1] != b.shape[0]:
        raise FormError(f"cannot compose coefficient shapes {a.shape} and {b.shape}")
    acc: dict[Index, list] = {}
    for i, fa in a.terms.items():
        for j, fb in b.terms.items():
            m = merge_indices(i, j)
            if m is None:
                continue
            k, sign = m
            prod = F.mul(fa, fb)
            acc.setdefault(k, []).append(prod if sign > 0 else F.scalar_mul(-1.0, prod))
    return FormField(a.n, {k: (v[0] if len(v) == 1 else F.add(*v)) for k, v in acc.items()}, (a.shape[0], b.shape[1]))


def exterior_derivative(w: FormField, x, max_order: int = F.DEFAULT_MAX_ORDER) -> PolyForm:
    """Pointwise value of ``dw`` at ``x``."""
    if isinstance(w, PolyForm):
        return w.d().values()
    return w.evaluate(x, 1, max_order).d().values()
