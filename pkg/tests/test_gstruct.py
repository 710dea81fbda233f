import numpy as np
import pytest

from gaugeflat import fields as F
from gaugeflat.connections import Connection, direct_sum, dual
from gaugeflat.fields import ChartDomain
from gaugeflat.forms import FormField
from gaugeflat.gstruct import (
    BilinearStructure,
    NotCompatibleError,
    StructureError,
    canonical_pairing,
    check_parallel,
    direct_sum_structure,
    dual_structure,
    g_inverse_residuals,
    g_structured_inverse,
    venice_double,
    venice_verify,
)

from conftest import field, random_connection

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@pytest.fixture
def so2(interval):
    return Connection.from_strings(interval, [[["0", "x1"], ["-x1", "0"]]])


def test_structure_validation():
    with pytest.raises(StructureError):
        BilinearStructure("symmetric", J2)
    with pytest.raises(StructureError):
        BilinearStructure("antisymmetric", np.eye(2))
    with pytest.raises(StructureError):
        BilinearStructure("symmetric", np.zeros((2, 2)))
    with pytest.raises(StructureError):
        BilinearStructure("hermitian", np.eye(2))
    assert BilinearStructure.infer(J2).kind == "antisymmetric"


def test_parallel_trivial(square):
    s = BilinearStructure("symmetric", np.diag([1.0, 2.0]))
    assert check_parallel(Connection.trivial(square, 2), s, square.sample(5)) == 0


def test_parallel_sl2_is_sp2(square):
    c = Connection.from_strings(square, [[["x1", "x2^2"], ["sin(x2)", "-x1"]], [["0.5i", "1"], ["x1*x2", "-0.5i"]]])
    assert check_parallel(c, BilinearStructure("antisymmetric", J2), square.sample(50)) <= 1e-12


def test_parallel_symmetric_violation(interval):
    # A symmetric, phi = I: A^T + A = 2A
    c = Connection.from_strings(interval, [[["0.5", "0.25"], ["0.25", "-1"]]])
    res = check_parallel(c, BilinearStructure("symmetric", np.eye(2)), interval.sample(5))
    assert res == pytest.approx(2.0)


def test_parallel_field_phi(interval):
    # phi(x) = e^{2x} I is parallel for A = I dx (d phi = A^T phi + phi A)
    c = Connection.from_strings(interval, [[["1", "0"], ["0", "1"]]])
    phi = field([["exp(2*x1)", "0"], ["0", "exp(2*x1)"]], interval)
    assert check_parallel(c, BilinearStructure("symmetric", phi), interval.sample(10)) <= 1e-12


def test_canonical_pairing():
    np.testing.assert_array_equal(canonical_pairing(1, "symmetric").phi, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(canonical_pairing(1, "antisymmetric").phi, J2)
    assert canonical_pairing(3, "antisymmetric").size == 6


@pytest.mark.parametrize("kind", ["symmetric", "antisymmetric"])
def test_pairing_preserved_by_sum_with_dual(rng, cube, kind):
    for r in (1, 2, 3):
        c = random_connection(rng, cube, r)
        res = check_parallel(direct_sum(c, dual(c)), canonical_pairing(r, kind), cube.sample(30))
        assert res <= 1e-12


def test_dual_structure_examples(rng):
    np.testing.assert_array_equal(dual_structure(BilinearStructure("symmetric", np.eye(3))).phi, np.eye(3))
    np.testing.assert_array_equal(dual_structure(BilinearStructure("antisymmetric", J2)).phi, J2)
    m = rng.normal(size=(4, 4))
    for kind, phi in (("symmetric", m + m.T + 8 * np.eye(4)), ("antisymmetric", m - m.T)):
        s = BilinearStructure(kind, phi)
        d = dual_structure(s)
        assert d.kind == kind
        sign = 1 if kind == "symmetric" else -1
        np.testing.assert_array_equal(d.phi.T, sign * d.phi)
        np.testing.assert_allclose(dual_structure(d).phi, phi, atol=1e-12)
        # (phi^-1)^T computed independently
        np.testing.assert_allclose(d.phi, np.linalg.inv(phi).T, atol=1e-12)


def test_contraction_transports_compatibility(so2, interval):
    s = BilinearStructure("symmetric", np.eye(2))
    x = interval.sample(20)
    assert check_parallel(so2, s, x) <= 1e-12
    assert check_parallel(dual(so2), dual_structure(s), x) <= 1e-12


def test_contraction_condition_bound(rng, square):
    # sp(2) after a constant change of frame: phi = P^T J P, A = P^-1 a P with a in sl2
    P = np.array([[1.0, 0.4], [0.2, 1.5]])
    Pi = np.linalg.inv(P)
    a = [np.array([[0.3, 0.7], [-0.2, -0.3]]), np.array([[0.1j, 0.5], [1.0, -0.1j]])]
    c = Connection([F.scalar_mul(field([["x1 + x2"]], square), F.constant(Pi @ ak @ P, square)) for ak in a], square)
    phi = P.T @ J2 @ P
    s = BilinearStructure("antisymmetric", 0.5 * (phi - phi.T))
    x = square.sample(20)
    before = check_parallel(c, s, x)
    after = check_parallel(dual(c), dual_structure(s), x)
    assert before <= 1e-12
    assert after <= np.linalg.cond(s.phi) ** 2 * max(before, 1e-15)


def test_g_inverse_flat(interval):
    c = Connection.trivial(interval, 2)
    res = g_structured_inverse(c, BilinearStructure("symmetric", np.eye(2)))
    x = interval.sample(20)
    out = g_inverse_residuals(res, c, x)
    assert out["output_compatibility"] <= 1e-10
    assert out["ch_degree0"] == 0
    assert res.inverse_conn.rank == 2 + 2 * (4 * 2 - 2)


def test_g_inverse_rejects_incompatible(interval):
    c = Connection.from_strings(interval, [[["x1", "0"], ["0", "-x1"]]])
    s = BilinearStructure("symmetric", np.eye(2))
    assert check_parallel(c, s, interval.sample(10)) > 0.1
    with pytest.raises(NotCompatibleError):
        g_structured_inverse(c, s)


def test_g_inverse_so2(so2, interval):
    s = BilinearStructure("symmetric", np.eye(2))
    res = g_structured_inverse(so2, s)
    assert res.ambient_rank == 8
    assert res.inverse_conn.rank == 14
    assert res.structure.size == 14
    assert res.total_structure.size == 16
    out = g_inverse_residuals(res, so2, interval.sample(100))
    assert out["output_compatibility"] <= 1e-9
    assert out["ch_degree0"] == 0
    assert out["total_kind"] == 0
    assert out["total_det"] > 1e-10


def test_g_inverse_sp2_ch(square):
    c = Connection.from_strings(square, [[["x1", "x2"], ["0.3", "-x1"]], [["0", "x1^2"], ["x2", "0"]]])
    s = BilinearStructure("antisymmetric", J2)
    res = g_structured_inverse(c, s, square.sample(50))
    out = g_inverse_residuals(res, c, square.sample(50, 1))
    assert out["output_compatibility"] <= 1e-9
    assert out["ch_positive"] <= 1e-7


def test_mixed_kind_sum_rejected():
    with pytest.raises(StructureError):
        direct_sum_structure(canonical_pairing(1, "symmetric"), canonical_pairing(1, "antisymmetric"))


def test_venice_flat(square):
    rep = venice_verify(Connection.trivial(square, 2), None, square.sample(5))
    assert rep.max_residual == 0


def test_venice_vortex(vortex, square):
    x = square.sample(50, 2)
    c = 0.3
    k = 1j * c / np.pi / 2
    eta = FormField(2, {(0,): F.scalar_field(f"({-k.imag}i)*x2", square), (1,): F.scalar_field(f"({k.imag}i)*x1", square)})
    assert venice_verify(vortex, eta, x).max_residual <= 1e-9
    rep0 = venice_verify(vortex, None, x)
    assert rep0.per_degree[2] == pytest.approx(c / np.pi, rel=1e-12)
    with pytest.raises(StructureError):
        venice_verify(vortex, FormField(2, {(): F.scalar_field("1", square)}), x)


def test_venice_double_flat(square):
    doubled, s, compat, rep = venice_double(Connection.trivial(square, 2), "symmetric", square.sample(5))
    assert doubled.rank == 4
    assert compat == 0
    assert rep.flagged == []
    assert max(rep.doubling.values()) == 0


def test_venice_double_vortex_flagged(vortex, square):
    x = square.sample(20)
    doubled, s, compat, rep = venice_double(vortex, "antisymmetric", x)
    assert compat <= 1e-12
    assert rep.dual_parity[1] <= 1e-10
    # ch_1 of the doubled bundle is (-1 + 1) ic/pi = 0, not twice ch_1
    assert rep.doubling[1] == pytest.approx(2 * 0.3 / np.pi, rel=1e-12)
    assert rep.flagged == [1]


def test_venice_double_degree_two_not_flagged(rng):
    dom = ChartDomain.box(4)
    c = random_connection(rng, dom, 2)
    _, _, compat, rep = venice_double(c, "symmetric", dom.sample(10))
    assert compat <= 1e-12
    assert max(rep.dual_parity.values()) <= 1e-10
    assert rep.doubling[2] <= 1e-10
    assert rep.flagged == [1]
