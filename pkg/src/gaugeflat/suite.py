"""Check batteries behind the CLI commands; each fills a :class:`Report`."""
from __future__ import annotations

import time
from contextlib import contextmanager

import numpy as np

from . import fields as F
from . import gstruct as G
from . import transport as T
from .connections import (
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
from .expr import ExprError
from .fields import OutOfDomainError
from .flattening import FlatteningError, flatten, inverse_residuals, rank_check, lemma_rank, structured_inverse
from .jets import SingularMatrixError
from .report import Report
from .scenario import Scenario

# failures that become failed checks instead of crashing the command
RUNTIME_ERRORS = (FlatteningError, SingularMatrixError, OutOfDomainError, T.PathError, ExprError, ArithmeticError)

CONVERGENCE_BASE_STEPS = 64
EXACT_LEVEL = 1e-13


@contextmanager
def stage(report: Report, name: str):
    """Time a group of checks; a runtime failure records ``name`` as failed."""
    before = set(report.checks)
    t0 = time.perf_counter()
    try:
        yield
    except RUNTIME_ERRORS as exc:
        report.fail(name, f"{type(exc).__name__}: {exc}")
    dt = time.perf_counter() - t0
    for k in set(report.checks) - before:
        report.checks[k].wall_time = dt


def _max_by_key(dicts):
    out = {}
    for d in dicts:
        for k, v in d.items():
            out[k] = max(out.get(k, 0.0), v)
    return out


def run_flatten(sc: Scenario, rep: Report, samples, fp=None):
    c = sc.connection()
    with stage(rep, "flatten.lemma_identity"):
        fp = fp or flatten(c)
        res = fp.certify(samples)
        for k, v in res.items():
            rep.check(f"flatten.{k}", v, len(samples))
        rep.note("flatten.ambient_rank", fp.rank)
    return fp


def run_invert(sc: Scenario, rep: Report, samples):
    c = sc.connection()
    steps = int(sc.settings["rk4_steps"])
    with stage(rep, "invert.ch_positive"):
        pair = structured_inverse(c)
        for k, v in inverse_residuals(pair, samples).items():
            rep.check(f"invert.{k}", v, len(samples))
        rep.note("invert.ambient_rank", pair.rank)
    with stage(rep, "invert.monodromy_identity"):
        loops = sc.loops()
        fp = pair.presentation
        hr = T.monodromy_check(fp, loops, steps)
        worst = _max_by_key(h.residuals for h in hr)
        rep.check("invert.monodromy_identity", worst["identity"], len(loops))
        rep.check("invert.monodromy_prediction", worst["transporter_prediction"], len(loops))
    with stage(rep, "invert.convergence_min"):
        _convergence(rep, "invert", fp.transporter, T.chord(sc.domain))


def _convergence(rep: Report, prefix: str, c, path, upper: bool = True):
    diffs = T.step_differences(c, path, CONVERGENCE_BASE_STEPS, 3)
    if max(diffs) < EXACT_LEVEL:
        # RK4 reproduces the transport to rounding (e.g. A = 0): no order to measure
        rep.note(f"{prefix}.convergence", "exact (no step dependence)")
        return
    ratios = [a / b if b > 0 else float("inf") for a, b in zip(diffs[:-1], diffs[1:])]
    rep.check(f"{prefix}.convergence_min", min(ratios), 1)
    if upper:
        rep.check(f"{prefix}.convergence_max", max(ratios), 1)
    rep.note(f"{prefix}.convergence_ratios", [float(x) for x in ratios])


def _gauge_field(sc: Scenario):
    """Smooth invertible ``u = (1 + 0.1 i x1) I + 0.2 (x1 + ... + xn) N`` with ``N`` nilpotent."""
    r, n, dom = sc.rank, sc.domain.dim, sc.domain
    s = " + ".join(f"x{k + 1}" for k in range(n))
    grid = [["0"] * r for _ in range(r)]
    for i in range(r):
        grid[i][i] = "1 + 0.1i*x1"
        if i + 1 < r:
            grid[i][i + 1] = f"0.2*({s})"
    return F.ExprField.parse(grid, dom)


def _split(path: T.PathSpec) -> tuple[T.PathSpec, T.PathSpec]:
    """First and second halves of a one-segment path, each reparametrized to [0, 1]."""
    from .expr import BinOp, Const, Coord

    t = Coord(0, "t")
    first = BinOp("*", Const(0.5), t)
    second = BinOp("+", Const(0.5), BinOp("*", Const(0.5), t))
    seg = path.segments[0]
    return (
        T.PathSpec((tuple(T._substitute(e, first) for e in seg),)),
        T.PathSpec((tuple(T._substitute(e, second) for e in seg),)),
    )


def run_holonomy(sc: Scenario, rep: Report):
    c = sc.connection()
    steps = int(sc.settings["rk4_steps"])
    loops = sc.loops()
    s = sc.structure()
    with stage(rep, "holonomy.min_abs_det"):
        Hs = [T.transport(c, lp, steps) for lp in loops]
        rep.check("holonomy.min_abs_det", min(abs(np.linalg.det(H)) for H in Hs), len(loops))
        rev = max(float(np.max(np.abs(T.transport(c, lp.reversed(), steps) @ H - np.eye(c.rank)))) for lp, H in zip(loops, Hs))
        rep.check("holonomy.reversal", rev, len(loops))
    with stage(rep, "holonomy.gauge_covariance"):
        u = _gauge_field(sc)
        cu = gauge_transform(c, u)
        worst = 0.0
        for lp, H in zip(loops, Hs):
            a, b = lp.endpoints()
            uv = F.eval_jet(u, np.stack([a, b]), 0).value
            pred = uv[1] @ H @ np.linalg.inv(uv[0])
            worst = max(worst, float(np.max(np.abs(T.transport(cu, lp, steps) - pred))))
        rep.check("holonomy.gauge_covariance", worst, len(loops))
    with stage(rep, "holonomy.composition"):
        chord = T.chord(sc.domain)
        p1, p2 = _split(chord)
        whole = T.transport(c, chord, steps)
        parts = T.transport(c, p2, steps // 2) @ T.transport(c, p1, steps // 2)
        rep.check("holonomy.composition", float(np.max(np.abs(whole - parts))), 1)
    with stage(rep, "holonomy.convergence_min"):
        # special inputs (e.g. abelian with linear coefficients) can converge faster than 4th order
        _convergence(rep, "holonomy", c, chord, upper=False)
    if s is not None:
        _group_checks(rep, Hs, s, "holonomy.group_form", "holonomy.group_det")


def _group_checks(rep: Report, Hs, s: G.BilinearStructure, name_form: str, name_det: str):
    group = "SO" if s.kind == "symmetric" else "SP"
    worst = _max_by_key(T.group_membership(H, s, group).residuals for H in Hs)
    rep.check(name_form, worst["form"], len(Hs))
    if group == "SO":
        rep.check(name_det, worst["det_minus_one"], len(Hs))
    rep.note(name_form.split(".")[0] + ".group", group)


def run_ginvert(sc: Scenario, rep: Report, samples):
    c = sc.connection()
    s = sc.structure()
    steps = int(sc.settings["rk4_steps"])
    pre = G.check_parallel(c, s, samples)
    rep.check("ginvert.input_compatibility", pre, len(samples))
    if not rep.checks["ginvert.input_compatibility"].passed:
        rep.checks["ginvert.input_compatibility"].message = "input connection does not preserve phi; pipeline not run"
        return
    with stage(rep, "ginvert.output_compatibility"):
        rep.check("ginvert.dual_contraction", G.check_parallel(dual(c), G.dual_structure(s), samples), len(samples))
        res = G.g_structured_inverse(c, s, samples, tol=rep.tolerance("ginvert.input_compatibility")[0])
        for k, v in G.g_inverse_residuals(res, c, samples).items():
            rep.check(f"ginvert.{k}", v, len(samples))
        rep.note("ginvert.inverse_rank", res.inverse_conn.rank)
        rep.note("ginvert.ambient_rank", res.ambient_rank)
    with stage(rep, "ginvert.holonomy_form"):
        loops = sc.loops()
        Hs = [T.transport(c, lp, steps) for lp in loops]
        _group_checks(rep, Hs, s, "ginvert.holonomy_form", "ginvert.holonomy_det")


def run_venice(sc: Scenario, rep: Report, samples, require_eta: bool = False):
    """With ``require_eta`` the ``ch - k = d eta`` residual is only checked when eta is given."""
    c = sc.connection()
    if require_eta and sc.eta_spec is None:
        rep.note("venice.eta", "absent; residual not checked")
    else:
        with stage(rep, "venice.residual"):
            vr = G.venice_verify(c, sc.eta(), samples)
            for p, v in vr.per_degree.items():
                rep.check(f"venice.residual_deg{p}", v, len(samples))
            rep.note("venice.eta", "given" if sc.eta_spec is not None else "zero")
    with stage(rep, "venice.dual_parity"):
        for kind in G.KINDS:
            _, _, compat, pr = G.venice_double(c, kind, samples)
            rep.check(f"venice.double_compatibility_{kind}", compat, len(samples))
        for j, v in pr.dual_parity.items():
            rep.check(f"venice.dual_parity_j{j}", v, len(samples))
        for j, v in pr.doubling.items():
            rep.note(f"venice.doubling_j{j}", v)
        rep.note("venice.doubling_flagged_j", pr.flagged)


def _affine_map(sc: Scenario):
    """Seeded affine contraction of the chart into itself."""
    dom = sc.domain
    n = dom.dim
    rng = np.random.default_rng([int(sc.settings["seed"]), 7])
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    half = 0.5 * (dom.upper - dom.lower)
    J = (0.9 / np.sqrt(n)) * (half[:, None] * Q / half[None, :])
    b = dom.center - J @ dom.center
    return J, b


def run_cs(sc: Scenario, rep: Report, samples):
    c1 = sc.connection()
    c0 = sc.reference()
    q = int(sc.settings["quad_nodes"])
    with stage(rep, "cs.transgression"):
        rep.check("cs.transgression", transgression_residual(c0, c1, samples, q), len(samples))
        rep.check("cs.self", cs_form(c1, c1, samples, q).max_abs(), len(samples))
    with stage(rep, "cs.functoriality"):
        J, b = _affine_map(sc)
        dom = sc.domain
        pulled = [pullback(cc, J, b, dom) for cc in (c0, c1)]
        lhs = cs_form_jets(*pulled, samples, q, 1).d().values()
        images = samples @ J.T + b
        rhs = pullback_form(cs_form_jets(c0, c1, images, q, 1).d().values(), J)
        rep.check("cs.functoriality", (lhs - rhs).max_abs(), len(samples))


def run_calculus(sc: Scenario, rep: Report, samples):
    c = sc.connection()
    dom = sc.domain
    with stage(rep, "calculus.jet_fd"):
        pts = dom.center + 0.99 * (samples[:20] - dom.center)
        h = 1e-5
        jets = c.jets(pts, 1)
        worst = 0.0
        for k in range(dom.dim):
            e = np.zeros(dom.dim)
            e[k] = h
            fd = (c.values(pts + e) - c.values(pts - e)) / (2 * h)
            for a, j in enumerate(jets):
                worst = max(worst, float(np.max(np.abs(fd[a] - j.first[k]))))
        rep.check("calculus.jet_fd", worst, len(pts))
    with stage(rep, "calculus.gauge_invariance"):
        cu = gauge_transform(c, _gauge_field(sc))
        rep.check("calculus.gauge_invariance", (chern_character(cu, samples) - chern_character(c, samples)).max_abs(), len(samples))
    with stage(rep, "calculus.dual_parity"):
        ch, chd = chern_character(c, samples), chern_character(dual(c), samples)
        for j in range(1, dom.dim // 2 + 1):
            rep.check(f"calculus.dual_parity_j{j}", (chd.degree(2 * j) - ch.degree(2 * j) * (-1) ** j).max_abs(), len(samples))
    if int(sc.settings["jet_order"]) >= 3:
        with stage(rep, "calculus.ch_closedness"):
            rep.check("calculus.ch_closedness", chern_closedness(c, samples), len(samples))
    else:
        rep.note("calculus.ch_closedness", "skipped (needs --jet-order 3)")


def run_ranks(n: int, r: int, rep: Report, table_max: int = 10):
    m_lemma, m_prop = rank_check(n, r)
    rep.note("ranks.M_lemma", m_lemma)
    rep.note("ranks.M_prop", m_prop)
    worst = 0
    for nn in range(1, table_max + 1):
        for rr in range(1, table_max + 1):
            a, b = rank_check(nn, rr)
            worst = max(worst, abs(a - (2 * nn + 2) * rr), abs(b - (4 * nn + 8 * rr + 2) * (nn + 2 * rr)), abs(b - lemma_rank(2 * nn + 4 * rr, nn + 2 * rr)))
    rep.check("ranks.composition", worst, table_max * table_max)


def run_verify(sc: Scenario, rep: Report, samples):
    run_flatten(sc, rep, samples)
    run_invert(sc, rep, samples)
    run_cs(sc, rep, samples)
    run_calculus(sc, rep, samples)
    run_holonomy(sc, rep)
    run_venice(sc, rep, samples, require_eta=True)
    if sc.structure_spec is not None:
        run_ginvert(sc, rep, samples)
    run_ranks(sc.domain.dim, sc.rank, rep)
