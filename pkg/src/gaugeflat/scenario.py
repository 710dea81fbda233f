"""Scenario files: JSON description of a chart, a connection and check settings.

Example::

    {
      "name": "x1dx1",
      "chart": {"n": 1, "box": [[-1, 1]]},
      "rank": 1,
      "connection": [[["x1"]]],
      "settings": {"samples": 100, "seed": 0}
    }

``connection[k]`` is the row-major grid of expression strings for ``A_k``.
Optional keys: ``reference`` (second connection, same layout, used as the
start of Chern-Simons transgressions), ``structure`` (``kind`` plus constant
``phi``), ``eta`` (list of ``{"indices": [...], "coefficient": "..."}``
with 1-based indices) and ``loops`` (list of loop specs, see
:func:`path_from_spec`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import fields as F
from .connections import Connection
from .expr import ExprError, parse_expr
from .fields import ChartDomain
from .forms import FormField
from .gstruct import BilinearStructure
from .transport import PathSpec, circle, loop_family, out_and_back, rectangle

DEFAULT_SETTINGS: dict[str, Any] = {
    "samples": 100,
    "seed": 0,
    "jet_order": 2,
    "quad_nodes": 8,
    "rk4_steps": 4096,
    "tolerances": {},
}


class ScenarioError(ValueError):
    pass


def parse_complex(v) -> complex:
    """Number, ``[re, im]`` pair or a literal such as ``"1+2i"``."""
    if isinstance(v, bool):
        raise ScenarioError(f"not a number: {v!r}")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", "").replace("i", "j"))
        except ValueError:
            pass
    raise ScenarioError(f"cannot read a complex number from {v!r}")


def _matrix(rows) -> np.ndarray:
    try:
        return np.array([[parse_complex(v) for v in row] for row in rows], dtype=complex)
    except TypeError:
        raise ScenarioError("matrix must be a list of rows") from None


def path_from_spec(spec: dict, n: int) -> PathSpec:
    """Loop spec: ``{"circle": {"center", "radius", "plane"}}``,
    ``{"rectangle": {"corner", "sides", "plane"}}``,
    ``{"line": {"center", "amplitude", "axis"}}`` or
    ``{"segments": [[expr in t, ...], ...], "closed": bool}``.

    Planes and axes are 1-based like coordinate names.
    """
    if "circle" in spec:
        s = spec["circle"]
        return circle(s["center"], s["radius"], tuple(p - 1 for p in s.get("plane", (1, 2))))
    if "rectangle" in spec:
        s = spec["rectangle"]
        return rectangle(s["corner"], s["sides"], tuple(p - 1 for p in s.get("plane", (1, 2))))
    if "line" in spec:
        s = spec["line"]
        return out_and_back(s["center"], s["amplitude"], s.get("axis", 1) - 1)
    if "segments" in spec:
        path = PathSpec.parse(spec["segments"], bool(spec.get("closed", False)))
        if path.dim != n:
            raise ScenarioError(f"path has {path.dim} coordinates on a chart in R^{n}")
        return path
    raise ScenarioError(f"unknown loop spec keys {sorted(spec)}")


@dataclass
class Scenario:
    name: str
    domain: ChartDomain
    rank: int
    connection_entries: list
    reference_entries: list | None = None
    structure_spec: dict | None = None
    eta_spec: list | None = None
    loop_specs: list | None = None
    settings: dict = field(default_factory=dict)
    description: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            chart = d["chart"]
            n = int(chart["n"])
            box = chart.get("box", [[-1.0, 1.0]] * n)
            if len(box) != n:
                raise ScenarioError(f"chart box has {len(box)} intervals for n={n}")
            domain = ChartDomain(tuple((float(a), float(b)) for a, b in box))
            sc = cls(
                name=str(d.get("name", "unnamed")),
                domain=domain,
                rank=int(d["rank"]),
                connection_entries=d["connection"],
                reference_entries=d.get("reference"),
                structure_spec=d.get("structure"),
                eta_spec=d.get("eta"),
                loop_specs=d.get("loops"),
                settings={**DEFAULT_SETTINGS, **d.get("settings", {})},
                description=str(d.get("description", "")),
            )
        except KeyError as exc:
            raise ScenarioError(f"missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed scenario: {exc}") from None
        sc.validate()
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: JSON error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "chart": {"n": self.domain.dim, "box": [list(b) for b in self.domain.bounds]},
            "rank": self.rank,
            "connection": self.connection_entries,
            "settings": self.settings,
        }
        if self.description:
            d["description"] = self.description
        for key, val in (
            ("reference", self.reference_entries),
            ("structure", self.structure_spec),
            ("eta", self.eta_spec),
            ("loops", self.loop_specs),
        ):
            if val is not None:
                d[key] = val
        return d

    def validate(self) -> None:
        """Parse every expression once so errors surface before any check runs."""
        self._connection(self.connection_entries, "connection")
        if self.reference_entries is not None:
            self._connection(self.reference_entries, "reference")
        if self.structure_spec is not None:
            self.structure()
        if self.eta_spec is not None:
            self.eta()
        self.loops()

    def _connection(self, entries, label: str) -> Connection:
        n, r = self.domain.dim, self.rank
        if len(entries) != n:
            raise ScenarioError(f"{label}: need {n} coefficient matrices, got {len(entries)}")
        for k, grid in enumerate(entries):
            if len(grid) != r or any(len(row) != r for row in grid):
                raise ScenarioError(f"{label}: A_{k + 1} is not {r}x{r}")
        try:
            return Connection.from_strings(self.domain, [[[str(e) for e in row] for row in grid] for grid in entries])
        except ExprError as exc:
            raise ScenarioError(f"{label}: {exc}") from None

    def connection(self) -> Connection:
        return self._connection(self.connection_entries, "connection")

    def reference(self) -> Connection:
        if self.reference_entries is None:
            return Connection.trivial(self.domain, self.rank)
        return self._connection(self.reference_entries, "reference")

    def structure(self) -> BilinearStructure | None:
        if self.structure_spec is None:
            return None
        try:
            return BilinearStructure(self.structure_spec["kind"], _matrix(self.structure_spec["phi"]))
        except KeyError as exc:
            raise ScenarioError(f"structure: missing key {exc}") from None
        except ValueError as exc:
            raise ScenarioError(f"structure: {exc}") from None

    def eta(self) -> FormField | None:
        if self.eta_spec is None:
            return None
        n = self.domain.dim
        terms = {}
        for item in self.eta_spec:
            idx = tuple(int(i) - 1 for i in item["indices"])
            if list(idx) != sorted(set(idx)) or any(i < 0 or i >= n for i in idx):
                raise ScenarioError(f"eta: bad index tuple {item['indices']}")
            try:
                expr = parse_expr(str(item["coefficient"]), self.domain)
            except ExprError as exc:
                raise ScenarioError(f"eta: {exc}") from None
            terms[idx] = F.scalar_field(expr, self.domain)
        return FormField(n, terms, (1, 1))

    def loops(self) -> list[PathSpec]:
        n = self.domain.dim
        if self.loop_specs is None:
            return loop_family(self.domain, int(self.settings["seed"]))
        try:
            return [path_from_spec(s, n) for s in self.loop_specs]
        except ExprError as exc:
            raise ScenarioError(f"loops: {exc}") from None
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"loops: malformed spec ({exc})") from None

    def samples(self) -> np.ndarray:
        return self.domain.sample(int(self.settings["samples"]), int(self.settings["seed"]))


# -- bundled corpus and generated scenarios ----------------------------------


def corpus_names() -> list[str]:
    root = resources.files("gaugeflat") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def corpus_path(name: str):
    return resources.files("gaugeflat") / "scenarios" / f"{name}.json"


def load_corpus(name: str) -> Scenario:
    return Scenario.from_dict(json.loads(corpus_path(name).read_text()))


_TEMPLATES = (
    "{c}",
    "{c}*x{i}",
    "{c}*x{i}*x{j}",
    "{c}*x{i}^2",
    "{c}*sin(x{i})",
    "{c}*cos(x{j})",
)


def _coef(rng, scale: float) -> str:
    re, im = np.round(rng.uniform(-scale, scale, 2), 3)
    if rng.random() < 0.5:
        return f"{re:.3f}" if re >= 0 else f"({re:.3f})"
    return f"({re:.3f}{im:+.3f}i)"


def _entry(rng, n: int, scale: float) -> str:
    if rng.random() < 0.2:
        return "0"
    terms = []
    for _ in range(rng.integers(1, 3)):
        tpl = _TEMPLATES[rng.integers(len(_TEMPLATES))]
        i, j = rng.integers(1, n + 1, 2)
        terms.append(tpl.format(c=_coef(rng, scale), i=i, j=j))
    return " + ".join(terms)


def random_scenario(n: int, r: int, seed: int, scale: float = 0.5) -> Scenario:
    """Seeded connection with degree <= 2 polynomial and trig entries on ``[-1, 1]^n``.

    ``scale`` bounds the coefficients; it keeps ``sum_k h_k f_k`` well
    conditioned so that ``|det g|`` stays far from zero.
    """
    rng = np.random.default_rng([seed, n, r])
    entries = [[[_entry(rng, n, scale) for _ in range(r)] for _ in range(r)] for _ in range(n)]
    ref = [[[_entry(rng, n, scale) for _ in range(r)] for _ in range(r)] for _ in range(n)]
    return Scenario.from_dict(
        {
            "name": f"random_n{n}_r{r}_s{seed}",
            "chart": {"n": n, "box": [[-1.0, 1.0]] * n},
            "rank": r,
            "connection": entries,
            "reference": ref,
            "settings": {"seed": seed},
        }
    )


def scenario_family(count: int = 20, seed: int = 0) -> list[Scenario]:
    """``count`` generated scenarios cycling through n, r in {1, 2, 3}."""
    shapes = [(n, r) for n in (1, 2, 3) for r in (1, 2, 3)]
    return [random_scenario(*shapes[i % len(shapes)], seed=seed + i) for i in range(count)]
