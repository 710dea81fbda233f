"""Acceptance criteria 1-9; each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
"""
import io
import itertools
import sys
import time

import numpy as np
import pytest

from gaugeflat import transport as T
from gaugeflat.cli import main
from gaugeflat.connections import (
    Connection,
    chern_character,
    chern_closedness,
    cs_form,
    cs_form_jets,
    dual,
    gauge_transform,
    pullback,
    pullback_form,
    transgression_residual,
)
from gaugeflat.fields import ChartDomain, eval_jet
from gaugeflat.flattening import flatten, inverse_residuals, lemma_rank, rank_check, structured_inverse
from gaugeflat.forms import FormField, exterior_derivative, wedge
from gaugeflat.gstruct import KINDS, venice_double
from gaugeflat.report import Report
from gaugeflat.scenario import load_corpus, scenario_family
from gaugeflat import suite

from conftest import field, random_connection, random_grid

FAMILY = scenario_family(20, seed=0)


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line past pytest's output capture."""

    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}")
        return ok

    return emit


def test_criterion_1_lemma_certification(verdict):
    t0 = time.perf_counter()
    worst = {"lemma_identity": 0.0, "g_inv_column": 0.0}
    min_det, min_eig = np.inf, np.inf
    for sc in FAMILY:
        res = flatten(sc.connection()).certify(sc.samples(), order_flat=0)
        for k in worst:
            worst[k] = max(worst[k], res[k])
        min_det = min(min_det, res["min_abs_det_g"])
        min_eig = min(min_eig, res["min_eig_f"])
    elapsed = time.perf_counter() - t0
    ok = worst["lemma_identity"] <= 1e-9 and min_det >= 1e-8 and worst["g_inv_column"] <= 1e-10 and min_eig > 0 and elapsed <= 60
    detail = (
        f"lemma {worst['lemma_identity']:.2e}, min|det g| {min_det:.2e}, column {worst['g_inv_column']:.2e}, "
        f"min eig {min_eig:.2e}, {elapsed:.1f}s over {len(FAMILY)} scenarios"
    )
    assert verdict(1, "lemma certification", ok, detail)


def test_criterion_2_rank_formulas(verdict):
    bad = []
    for n, r in itertools.product(range(1, 11), repeat=2):
        m_lemma, m_prop = rank_check(n, r)
        if m_lemma != (2 * n + 2) * r or m_prop != (4 * n + 8 * r + 2) * (n + 2 * r) or m_prop != (2 * (2 * n + 4 * r) + 2) * (n + 2 * r):
            bad.append((n, r))
    ok = not bad and rank_check(1, 1) == (4, 42) and lemma_rank(6, 3) == 42
    assert verdict(2, "rank formulas", ok, f"100 (n, r) pairs, mismatches {bad}, (1,1) -> {rank_check(1, 1)}")


def test_criterion_3_structured_inverse(verdict):
    worst = {"flat": 0.0, "ch_positive": 0.0, "ch_degree0": 0.0, "ss": 0.0}
    for sc in FAMILY:
        x = sc.samples()
        pair = structured_inverse(sc.connection())
        worst["flat"] = max(worst["flat"], pair.presentation.certify(x)["ambient_flatness"])
        res = inverse_residuals(pair, x)
        worst["ch_positive"] = max(worst["ch_positive"], res["ch_positive"])
        worst["ch_degree0"] = max(worst["ch_degree0"], res["ch_degree0"])
        worst["ss"] = max(worst["ss"], res["ss_block_V"], res["ss_block_W"], res["ss_ch"])
    ok = worst["flat"] <= 1e-7 and worst["ch_positive"] <= 1e-7 and worst["ch_degree0"] == 0 and worst["ss"] <= 1e-8
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    assert verdict(3, "structured inverse", ok, detail)


def test_criterion_4_trivial_monodromy(verdict):
    worst, ratios = 0.0, []
    for sc in FAMILY:
        fp = flatten(sc.connection())
        loops = T.loop_family(sc.domain, int(sc.settings["seed"]))
        assert len(loops) == 9
        for rep in T.monodromy_check(fp, loops, 8192):
            worst = max(worst, rep.residuals["identity"])
        ratios.extend(T.convergence_ratios(fp.transporter, T.chord(sc.domain), 64, 3))
    lo, hi = min(ratios), max(ratios)
    ok = worst <= 1e-6 and 12 <= lo and hi <= 20
    detail = f"max |H - I| {worst:.2e} over {9 * len(FAMILY)} loops, step-halving ratios in [{lo:.2f}, {hi:.2f}]"
    assert verdict(4, "trivial monodromy", ok, detail)


def test_criterion_5_cs_axioms(verdict):
    trans, self_max, func = 0.0, 0.0, 0.0
    for sc in FAMILY:
        x = sc.samples()[:25]
        c0, c1 = sc.reference(), sc.connection()
        trans = max(trans, transgression_residual(c0, c1, x, quad_nodes=8))
        self_max = max(self_max, cs_form(c1, c1, x, 8).max_abs())
        J, b = suite._affine_map(sc)
        dom = sc.domain
        lhs = cs_form_jets(pullback(c0, J, b, dom), pullback(c1, J, b, dom), x, 8, 1).d().values()
        rhs = pullback_form(cs_form_jets(c0, c1, x @ J.T + b, 8, 1).d().values(), J)
        func = max(func, (lhs - rhs).max_abs())
    ok = trans <= 1e-8 and self_max == 0 and func <= 1e-8
    assert verdict(5, "CS axioms", ok, f"transgression {trans:.2e}, CS(c,c) {self_max:.1e}, functoriality {func:.2e}")


def test_criterion_6_g_pipeline(verdict):
    names = ["so2_n1", "so2_n2", "so3_n2", "sp2_n2"]
    worst = {}
    passed = True
    for name in names:
        sc = load_corpus(name)
        rep = Report("g-invert", name, {}, {})
        suite.run_ginvert(sc, rep, sc.samples())
        passed &= rep.passed
        for key in ("input_compatibility", "output_compatibility", "ch_positive", "ch_degree0", "holonomy_form", "holonomy_det"):
            c = rep.checks.get(f"ginvert.{key}")
            if c is not None:
                worst[key] = max(worst.get(key, 0.0), c.value if c.value is not None else np.inf)
    ok = (
        passed
        and worst["input_compatibility"] <= 1e-9
        and worst["output_compatibility"] <= 1e-9
        and worst["ch_positive"] <= 1e-7
        and worst["ch_degree0"] == 0
        and worst["holonomy_form"] <= 1e-6
        and worst["holonomy_det"] <= 1e-6
    )
    assert verdict(6, "G-pipeline", ok, f"{', '.join(names)}: " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_7_dual_parity_and_doubling(verdict):
    parity, compat = 0.0, 0.0
    dom4 = ChartDomain.box(4)
    rng = np.random.default_rng(7)
    conns = [(sc.connection(), sc.samples()[:30]) for sc in FAMILY]
    conns += [(random_connection(rng, dom4, r), dom4.sample(20, r)) for r in (1, 2, 3)]
    flagged_ok = True
    for c, x in conns:
        ch, chd = chern_character(c, x), chern_character(dual(c), x)
        for p in range(2, c.n + 1, 2):
            parity = max(parity, (chd.degree(p) - ch.degree(p) * (-1) ** (p // 2)).max_abs())
        for kind in KINDS:
            _, _, cmp_, rep = venice_double(c, kind, x)
            compat = max(compat, cmp_)
            # flags exactly the odd Chern degrees where ch_j(c) is nonzero
            expected = [j for j in rep.doubling if j % 2 == 1 and ch.degree(2 * j).max_abs() > 1e-10]
            flagged_ok &= rep.flagged == expected
    vortex = load_corpus("abelian_vortex")
    _, _, _, vrep = venice_double(vortex.connection(), "symmetric", vortex.samples())
    ok = parity <= 1e-10 and compat <= 1e-12 and flagged_ok and vrep.flagged == [1]
    detail = f"dual parity {parity:.2e}, pairing compatibility {compat:.2e}, abelian vortex flagged degrees j={vrep.flagged}"
    assert verdict(7, "dual parity and doubling", ok, detail)


def test_criterion_8_calculus_substrate(verdict):
    rng = np.random.default_rng(8)
    dom = ChartDomain.box(4)
    x = dom.sample(10, 1)
    res = dict.fromkeys(["d^2", "leibniz", "graded_comm", "gauge_inv", "ch_closed", "jet_fd"], 0.0)

    def form(p, r=2):
        return FormField(4, {idx: field(random_grid(rng, 4, r), dom) for idx in itertools.combinations(range(4), p)}, (r, r))

    for trial in range(20):
        w = form(trial % 3)
        res["d^2"] = max(res["d^2"], w.d().evaluate(x, 1).d().values().max_abs())
        p, q = trial % 2 + 1, (trial // 2) % 3
        a, b = form(p), form(q)
        lhs = exterior_derivative(a ^ b, x)
        rhs = (a.d() ^ b).at(x) + (a ^ b.d()).at(x) * (-1) ** p
        res["leibniz"] = max(res["leibniz"], (lhs - rhs).max_abs())
        sa, sb = form(p, 1).at(x), form(q, 1).at(x)
        res["graded_comm"] = max(res["graded_comm"], (wedge(sa, sb) - wedge(sb, sa) * (-1) ** (p * q)).max_abs())
        r = trial % 3 + 1
        c = random_connection(rng, dom, r, poly_only=trial % 2 == 0)
        u = field([["1 + 0.1i*x1" if i == j else ("0.2*(x1 + x2 + x3 + x4)" if j == i + 1 else "0") for j in range(r)] for i in range(r)], dom)
        res["gauge_inv"] = max(res["gauge_inv"], (chern_character(gauge_transform(c, u), x) - chern_character(c, x)).max_abs())
        cp = random_connection(rng, dom, r, poly_only=True)
        res["ch_closed"] = max(res["ch_closed"], chern_closedness(cp, x))
        y = dom.center + 0.9 * (dom.sample(1, trial)[0] - dom.center)
        first = [j.first for j in c.jets(y, 1)]
        for k in range(4):
            e = np.zeros(4)
            e[k] = 1e-5
            fd = (c.values(y + e) - c.values(y - e)) / 2e-5
            res["jet_fd"] = max(res["jet_fd"], max(np.max(np.abs(fd[m] - first[m][k])) for m in range(4)))
    ok = all(v <= 1e-8 for k, v in res.items() if k != "jet_fd") and res["jet_fd"] <= 1e-7
    assert verdict(8, "calculus substrate", ok, ", ".join(f"{k} {v:.2e}" for k, v in res.items()))


def test_criterion_9_determinism(verdict):
    argv = ["verify", "--scenario", "corpus", "--seed", "0", "--jet-order", "3", "--format", "structured"]
    outs, codes = [], []
    for _ in range(2):
        buf = io.BytesIO()
        codes.append(main(argv, buf, io.StringIO()))
        outs.append(buf.getvalue())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    detail = f"two corpus runs, {len(outs[0])} bytes each, identical={outs[0] == outs[1]}, exit codes {codes}"
    assert verdict(9, "determinism", ok, detail)
    assert codes == [0, 0]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
