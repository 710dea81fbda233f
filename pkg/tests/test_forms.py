import itertools
import math

import numpy as np
import pytest

from gaugeflat import fields as F
from gaugeflat.fields import ChartDomain
from gaugeflat.forms import FormError, FormField, PolyForm, exp_truncated, exterior_derivative, trace, wedge

from conftest import field, random_grid


def random_polyform(rng, n, degree, r=1):
    terms = {}
    for idx in itertools.combinations(range(n), degree):
        terms[idx] = rng.normal(size=(r, r)) + 1j * rng.normal(size=(r, r))
    return PolyForm(n, terms, (r, r))


def random_formfield(rng, domain, degree, r=1, poly_only=True):
    n = domain.dim
    return FormField(
        n,
        {idx: field(random_grid(rng, n, r, poly_only=poly_only), domain) for idx in itertools.combinations(range(n), degree)},
        (r, r),
    )


def dense(w: PolyForm, p: int) -> np.ndarray:
    """Fully antisymmetric coefficient array of the degree-p part (independent of sparse storage)."""
    n = w.n
    out = np.zeros((n,) * p + w.shape, dtype=complex)
    for idx, c in w.degree(p).terms.items():
        for perm in itertools.permutations(range(p)):
            inv = sum(1 for a in range(p) for b in range(a + 1, p) if perm[a] > perm[b])
            out[tuple(idx[q] for q in perm)] = (-1) ** inv * np.asarray(c)
    return out


def brute_wedge(a: PolyForm, p: int, b: PolyForm, q: int) -> np.ndarray:
    """(a ^ b)_{K} = sum over shuffles, from the antisymmetrized tensor product."""
    A, B = dense(a, p), dense(b, q)
    n = a.n
    out = {}
    for K in itertools.combinations(range(n), p + q):
        acc = 0
        for perm in itertools.permutations(K):
            inv = sum(1 for s in range(p + q) for t in range(s + 1, p + q) if perm[s] > perm[t])
            acc = acc + (-1) ** inv * A[perm[:p]] @ B[perm[p:]]
        out[K] = acc / (math.factorial(p) * math.factorial(q))
    return out


def test_basic_wedge():
    a = PolyForm(2, {(0,): 1.0})
    b = PolyForm(2, {(1,): 1.0})
    ab = wedge(a, b)
    assert ab.coeff((0, 1))[0, 0] == 1
    assert wedge(b, a).coeff((0, 1))[0, 0] == -1
    w = a + b * 3.0
    assert wedge(w, w).max_abs() == 0


@pytest.mark.parametrize("p,q", [(1, 1), (1, 2), (2, 2), (1, 3), (2, 1)])
def test_graded_commutativity_and_brute_force(rng, p, q):
    for _ in range(5):
        a, b = random_polyform(rng, 4, p), random_polyform(rng, 4, q)
        ab, ba = wedge(a, b), wedge(b, a)
        for K, val in brute_wedge(a, p, b, q).items():
            np.testing.assert_allclose(ab.coeff(K), val, atol=1e-12)
        for K in ab.terms:
            np.testing.assert_allclose(ab.coeff(K), (-1) ** (p * q) * ba.coeff(K), atol=1e-12)


def test_wedge_matrix_shape_mismatch():
    with pytest.raises(FormError):
        wedge(PolyForm(2, {(0,): np.eye(2)}), PolyForm(2, {(1,): np.eye(3)}))


def test_wedge_associative(rng):
    worst = 0.0
    for _ in range(20):
        a, b, c = (random_polyform(rng, 4, p, r=2) for p in rng.integers(1, 3, 3))
        lhs, rhs = wedge(wedge(a, b), c), wedge(a, wedge(b, c))
        worst = max(worst, (lhs - rhs).max_abs())
    assert worst <= 1e-12


def test_d_examples(square):
    x = square.sample(10, 0)
    w = FormField(2, {(0,): field([["x2"]], square)})
    dw = exterior_derivative(w, x)
    np.testing.assert_array_equal(dw.coeff((0, 1)), -np.ones((10, 1, 1)))
    w = FormField(2, {(0,): field([["x1"]], square)})
    assert exterior_derivative(w, x).max_abs() == 0


def test_d_of_top_degree_vanishes(square, rng):
    w = random_formfield(rng, square, 2)
    assert exterior_derivative(w, square.sample(5, 1)).max_abs() == 0


def test_d_squared_vanishes(rng):
    dom = ChartDomain.box(4)
    x = dom.sample(8, 2)
    worst = 0.0
    for trial in range(20):
        w = random_formfield(rng, dom, trial % 3, r=2)
        ddw = w.d().evaluate(x, 1).d().values()
        worst = max(worst, ddw.max_abs())
    assert worst <= 1e-10


def test_lazy_d_matches_pointwise_d(rng, cube):
    w = random_formfield(rng, cube, 1, poly_only=False)
    x = cube.sample(6, 3)
    assert (w.d().at(x) - exterior_derivative(w, x)).max_abs() <= 1e-13


def test_leibniz(rng, cube):
    x = cube.sample(8, 4)
    worst = 0.0
    for trial in range(20):
        p, q = trial % 2 + 1, (trial // 2) % 2
        a = random_formfield(rng, cube, p, r=2, poly_only=False)
        b = random_formfield(rng, cube, q, r=2, poly_only=False)
        lhs = exterior_derivative(a ^ b, x)
        rhs = (a.d() ^ b).at(x) + (a ^ b.d()).at(x) * (-1) ** p
        worst = max(worst, (lhs - rhs).max_abs())
    assert worst <= 1e-9


def test_trace_examples(rng):
    assert trace(PolyForm(3, {(): np.eye(3)})).coeff(())[0, 0] == 3
    assert trace(PolyForm.zero(3, (2, 2))).max_abs() == 0
    with pytest.raises(FormError):
        trace(PolyForm(2, {(0,): np.ones((2, 3))}))


@pytest.mark.parametrize("p,q", [(1, 1), (1, 2), (2, 2), (0, 3)])
def test_graded_trace_cyclicity(rng, p, q):
    for _ in range(5):
        a, b = random_polyform(rng, 4, p, r=3), random_polyform(rng, 4, q, r=3)
        res = trace(wedge(a, b) - wedge(b, a) * (-1) ** (p * q))
        assert res.max_abs() <= 1e-12


def test_exp_truncated_small_cases():
    e = exp_truncated(PolyForm.zero(3, (2, 2)))
    np.testing.assert_array_equal(e.coeff(()), np.eye(2))
    assert e.degrees == [0]
    Fm = np.array([[1, 2j], [0, 3]])
    w = PolyForm(2, {(0, 1): Fm})
    e = exp_truncated(w)
    np.testing.assert_array_equal(e.coeff(()), np.eye(2))
    np.testing.assert_array_equal(e.coeff((0, 1)), Fm)
    with pytest.raises(FormError):
        exp_truncated(PolyForm(2, {(0,): np.eye(2)}))


def naive_series(w: PolyForm, terms: int) -> PolyForm:
    out = PolyForm(w.n, {(): np.eye(w.shape[0])}, w.shape)
    power = PolyForm(w.n, {(): np.eye(w.shape[0])}, w.shape)
    for k in range(1, terms + 1):
        power = wedge(power, w)
        out = out + power * (1 / math.factorial(k))
    return out


def test_exp_truncated_four_dimensions(rng):
    # two commuting blocks in dx1^dx2 and dx3^dx4 plus a generic mixed term
    a = rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    c = rng.normal(size=(2, 2))
    w = PolyForm(4, {(0, 1): a, (2, 3): b, (0, 2): c})
    e = exp_truncated(w)
    assert (e - naive_series(w, 2)).max_abs() <= 1e-15
    assert (e - naive_series(w, 5)).max_abs() <= 1e-15
    np.testing.assert_allclose(e.coeff((0, 1, 2, 3)), (a @ b + b @ a) / 2, atol=1e-15)


def test_formfield_rejects_wrong_chart(square, cube):
    with pytest.raises(FormError):
        FormField(3, {(0,): F.identity(1, square)})
    with pytest.raises(FormError):
        PolyForm(3, {(1, 0): 1.0})
