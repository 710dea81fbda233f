"""Parallel transport by classical RK4, monodromy and holonomy-group checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fields as F
from .connections import Connection
from .expr import Expr, parse_expr
from .fields import ChartDomain, OutOfDomainError

DEFAULT_STEPS = 4096
MIN_STEPS = 16
# points per batched evaluation of the connection along a path
CHUNK = 2048


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class PathSpec:
    """Piecewise-smooth path: each segment maps t in [0, 1] to R^n by expressions."""

    segments: tuple[tuple[Expr, ...], ...]
    closed: bool = False

    @classmethod
    def parse(cls, segments: Sequence[Sequence[str]], closed: bool = False) -> "PathSpec":
        return cls(tuple(tuple(parse_expr(s, parameter="t") for s in seg) for seg in segments), closed)

    @property
    def dim(self) -> int:
        return len(self.segments[0])

    def points(self, t) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Positions and velocities per segment at parameters ``t``."""
        tt = np.asarray(t, dtype=float)[:, None]
        xs, vs = [], []
        for seg in self.segments:
            js = [e.jet(tt, 1) for e in seg]
            xs.append(np.stack([j.value[:, 0, 0].real for j in js], axis=-1))
            vs.append(np.stack([j.part(1)[0, :, 0, 0].real for j in js], axis=-1))
        return xs, vs

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        xs, _ = self.points([0.0, 1.0])
        return xs[0][0], xs[-1][1]

    def reversed(self) -> "PathSpec":
        from .expr import BinOp, Const, Coord

        flip = BinOp("-", Const(1.0), Coord(0, "t"))
        segs = tuple(tuple(_substitute(e, flip) for e in seg) for seg in reversed(self.segments))
        return PathSpec(segs, self.closed)

    def validate(self, domain: ChartDomain) -> None:
        if self.dim != domain.dim:
            raise PathError(f"path in R^{self.dim} on a chart in R^{domain.dim}")
        if self.closed:
            a, b = self.endpoints()
            if np.max(np.abs(a - b)) > 1e-12:
                raise PathError("closed path does not return to its start")
        for i in range(len(self.segments) - 1):
            end = self.points([1.0])[0][i][0]
            start = self.points([0.0])[0][i + 1][0]
            if np.max(np.abs(end - start)) > 1e-12:
                raise PathError(f"segments {i} and {i + 1} do not join")


def _substitute(e: Expr, t_expr: Expr) -> Expr:
    from dataclasses import fields as dc_fields, replace

    from .expr import Coord

    if isinstance(e, Coord):
        return t_expr
    kw = {}
    for f in dc_fields(e):
        v = getattr(e, f.name)
        if isinstance(v, Expr):
            kw[f.name] = _substitute(v, t_expr)
    return replace(e, **kw) if kw else e


def _fmt(v: float) -> str:
    return repr(float(v))


def circle(center, radius: float, plane=(0, 1)) -> PathSpec:
    """Counterclockwise circle in the coordinate plane ``plane`` (0-based axes)."""
    center = np.asarray(center, dtype=float)
    i, j = plane
    coords = []
    for k, c in enumerate(center):
        if k == i:
            coords.append(f"{_fmt(c)} + {_fmt(radius)}*cos(6.283185307179586*t)")
        elif k == j:
            coords.append(f"{_fmt(c)} + {_fmt(radius)}*sin(6.283185307179586*t)")
        else:
            coords.append(_fmt(c))
    path = PathSpec.parse([coords], closed=False)
    # cos(2 pi) differs from 1 by rounding only; close up to that
    return PathSpec(path.segments, closed=True)


def rectangle(corner, sides, plane=(0, 1)) -> PathSpec:
    """Axis-aligned rectangle with four straight segments."""
    corner = np.asarray(corner, dtype=float)
    i, j = plane
    a, b = sides
    pts = [corner.copy() for _ in range(5)]
    pts[1][i] += a
    pts[2][i] += a
    pts[2][j] += b
    pts[3][j] += b
    segs = []
    for p, q in zip(pts[:-1], pts[1:]):
        segs.append([f"{_fmt(p[k])} + {_fmt(q[k] - p[k])}*t" if q[k] != p[k] else _fmt(p[k]) for k in range(len(p))])
    return PathSpec.parse(segs, closed=True)


def out_and_back(center, amplitude: float, axis: int = 0) -> PathSpec:
    """Closed 1-D excursion ``c + a sin(2 pi t)`` along one axis."""
    center = np.asarray(center, dtype=float)
    coords = [f"{_fmt(c)} + {_fmt(amplitude)}*sin(6.283185307179586*t)" if k == axis else _fmt(c) for k, c in enumerate(center)]
    return PathSpec(PathSpec.parse([coords]).segments, closed=True)


def _generator(c: Connection, xs: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """``-sum_k A_k(x) v_k`` for each row of ``xs``."""
    out = []
    for lo in range(0, len(xs), CHUNK):
        x, v = xs[lo : lo + CHUNK], vs[lo : lo + CHUNK]
        try:
            A = c.values(x)
        except OutOfDomainError as exc:
            raise PathError(f"path exits the chart: {exc}") from None
        out.append(-np.einsum("kpij,pk->pij", A, v))
    return np.concatenate(out)


def _gauge_generator(g: F.SmoothMatrixField, xs: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """``(D_v g) g^-1``, i.e. ``-B(v)`` for ``B = -dg g^-1``, without forming ``g^-1``."""
    out = []
    for lo in range(0, len(xs), CHUNK):
        x, v = xs[lo : lo + CHUNK], vs[lo : lo + CHUNK]
        try:
            j = F.eval_jet(g, x, 1)
        except OutOfDomainError as exc:
            raise PathError(f"path exits the chart: {exc}") from None
        dg = np.einsum("kpij,pk->pij", j.first, v)
        # X g = dg  <=>  g^T X^T = dg^T
        X = np.linalg.solve(np.swapaxes(j.value, -1, -2), np.swapaxes(dg, -1, -2))
        out.append(np.swapaxes(X, -1, -2))
    return np.concatenate(out)


def _rk4_propagators(G: np.ndarray, h: float) -> np.ndarray:
    """One-step RK4 maps for ``P' = G(t) P``; ``G`` holds nodes t0, t0+h/2, t0+h, ..."""
    G0, Gh, G1 = G[:-1:2], G[1::2], G[2::2]
    r = G.shape[-1]
    I = np.eye(r)
    K1 = G0
    K2 = Gh @ (I + 0.5 * h * K1)
    K3 = Gh @ (I + 0.5 * h * K2)
    K4 = G1 @ (I + h * K3)
    return I + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)


def _ordered_product(R: np.ndarray) -> np.ndarray:
    """``R[N-1] ... R[1] R[0]`` by pairwise reduction."""
    while len(R) > 1:
        if len(R) % 2:
            last = R[-1:]
            R = np.concatenate([R[1:-1:2] @ R[0:-1:2], last])
        else:
            R = R[1::2] @ R[0::2]
    return R[0]


def _integrate(generator, rank: int, domain: ChartDomain, path: PathSpec, steps: int) -> np.ndarray:
    if steps < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps")
    path.validate(domain)
    nseg = len(path.segments)
    per = max(MIN_STEPS // nseg, steps // nseg)
    t = np.linspace(0.0, 1.0, 2 * per + 1)
    xs, vs = path.points(t)
    H = np.eye(rank, dtype=complex)
    for x, v in zip(xs, vs):
        H = _ordered_product(_rk4_propagators(generator(x, v), 1.0 / per)) @ H
    return H


def transport(c: Connection, path: PathSpec, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Parallel transport ``P(1)`` solving ``P' = -A(x') P``, ``P(0) = I``.

    Classical RK4 with ``steps`` steps spread evenly over the segments.
    """
    return _integrate(lambda x, v: _generator(c, x, v), c.rank, c.domain, path, steps)


def gauge_transport(g: F.SmoothMatrixField, path: PathSpec, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """RK4 transport for the flat connection ``-dg g^-1``.

    Same integrator as :func:`transport`; the generator is formed by a
    linear solve against ``g`` instead of the lazily composed ``g^-1``.
    """
    return _integrate(lambda x, v: _gauge_generator(g, x, v), g.shape[0], g.domain, path, steps)


@dataclass
class HolonomyReport:
    H: np.ndarray
    residuals: dict[str, float] = field(default_factory=dict)
    steps: int = 0

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.H))


def monodromy_check(fp, loops: Sequence[PathSpec], steps: int = DEFAULT_STEPS) -> list[HolonomyReport]:
    """Transport the flat ambient ``d + B`` around closed loops.

    ``transporter_prediction`` compares with ``g~(end) g~(start)^-1``, which
    is the exact transport of ``B = -dg~ g~^-1``.
    """
    M = fp.rank
    out = []
    for loop in loops:
        if not loop.closed:
            raise PathError("monodromy needs closed loops")
        H = gauge_transport(fp.transporter, loop, steps)
        a, b = loop.endpoints()
        g = F.eval_jet(fp.transporter, np.stack([a, b]), 0).value
        pred = g[1] @ np.linalg.inv(g[0])
        I = np.eye(M)
        out.append(
            HolonomyReport(
                H,
                {
                    "identity": float(np.max(np.abs(H - I))),
                    "transporter_prediction": float(np.max(np.abs(H - pred))),
                },
                steps,
            )
        )
    return out


def group_membership(H: np.ndarray, s=None, group: str = "GL") -> HolonomyReport:
    """Residuals of ``H`` against GL, SO(phi) or Sp(phi)."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    res = {"abs_det": float(abs(np.linalg.det(H)))}
    group = group.upper()
    if group in ("SO", "SP"):
        if s is None:
            raise ValueError(f"{group} membership needs a bilinear structure")
        phi = s.phi
        if phi.shape != H.shape:
            raise ValueError("structure size differs from H")
        want = "symmetric" if group == "SO" else "antisymmetric"
        if s.kind != want:
            raise ValueError(f"{group} needs a {want} form")
        res["form"] = float(np.max(np.abs(H.T @ phi @ H - phi)))
        if group == "SO":
            res["det_minus_one"] = float(abs(np.linalg.det(H) - 1))
    elif group != "GL":
        raise ValueError(f"unknown group {group!r}")
    return HolonomyReport(H, res)


def loop_family(domain: ChartDomain, seed: int = 0, scales=(0.15, 0.3, 0.45), centers: int = 3) -> list[PathSpec]:
    """Rectangles and circles at several scales around seeded base points.

    Scales are fractions of the smallest half-width of the chart.
    """
    rng = np.random.default_rng(seed)
    n = domain.dim
    half = 0.5 * float(np.min(domain.upper - domain.lower))
    rmax = max(scales) * half
    lo, hi = domain.lower + rmax, domain.upper - rmax
    loops = []
    for ci in range(centers):
        base = lo + rng.random(n) * (hi - lo)
        plane = tuple(sorted(rng.choice(n, 2, replace=False))) if n >= 2 else (0, 0)
        for si, frac in enumerate(scales):
            rho = frac * half
            if n == 1:
                loops.append(out_and_back(base, rho))
            elif (ci + si) % 2 == 0:
                corner = base.copy()
                corner[plane[0]] -= rho
                corner[plane[1]] -= rho
                loops.append(rectangle(corner, (2 * rho, 2 * rho), plane))
            else:
                loops.append(circle(base, rho, plane))
    return loops


def chord(domain: ChartDomain, shrink: float = 0.8, bend: float = 0.3) -> PathSpec:
    """Open curved path across the chart, from near the lower corner to near the upper one.

    Used for step-halving: around closed loops of a flat connection the
    leading RK4 error partly cancels and the observed order exceeds 4.
    """
    n = domain.dim
    c, half = domain.center, 0.5 * (domain.upper - domain.lower)
    a, b = c - shrink * half, c + shrink * half
    coords = []
    for k in range(n):
        expr = f"{_fmt(a[k])} + {_fmt(b[k] - a[k])}*t"
        if k > 0:
            expr += f" + {_fmt(4 * bend * half[k] * (1 - shrink))}*t*(1 - t)"
        coords.append(expr)
    return PathSpec.parse([coords])


def step_differences(c, path: PathSpec, base_steps: int = 64, doublings: int = 3) -> list[float]:
    """``max |H(2s) - H(s)|`` for ``s = base_steps * 2^i``, ``i < doublings``."""
    run = transport if isinstance(c, Connection) else gauge_transport
    Hs = [run(c, path, base_steps * 2**i) for i in range(doublings + 1)]
    return [float(np.max(np.abs(b - a))) for a, b in zip(Hs[:-1], Hs[1:])]


def convergence_ratios(c, path: PathSpec, base_steps: int = 64, doublings: int = 3) -> list[float]:
    """Ratios of successive ``|H(2s) - H(s)|``; about 16 for a 4th-order method.

    ``c`` is a Connection or, for a flat ``-dg g^-1``, the field ``g``.
    """
    diffs = step_differences(c, path, base_steps, doublings)
    return [a / b if b > 0 else float("inf") for a, b in zip(diffs[:-1], diffs[1:])]
