"""Check records, default tolerances and report serialization."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

# name -> (default tolerance, relation); relation says how value compares to tolerance
CHECKS: dict[str, tuple[float, str]] = {
    "flatten.lemma_identity": (1e-9, "<="),
    "flatten.min_abs_det_g": (1e-8, ">="),
    "flatten.g_inv_column": (1e-10, "<="),
    "flatten.pair_reconstruction": (1e-10, "<="),
    "flatten.min_eig_f": (0.0, ">"),
    "flatten.min_h": (0.0, ">"),
    "flatten.ambient_top_block": (1e-9, "<="),
    "flatten.ambient_flatness": (1e-7, "<="),
    "invert.ch_degree0": (0.0, "<="),
    "invert.ch_positive": (1e-7, "<="),
    "invert.induced_V": (1e-9, "<="),
    "invert.ss_block_V": (1e-8, "<="),
    "invert.ss_block_W": (1e-8, "<="),
    "invert.ss_ch": (1e-8, "<="),
    "invert.monodromy_identity": (1e-6, "<="),
    "invert.monodromy_prediction": (1e-6, "<="),
    "invert.convergence_min": (12.0, ">="),
    "invert.convergence_max": (20.0, "<="),
    "ginvert.input_compatibility": (1e-9, "<="),
    "ginvert.dual_contraction": (1e-9, "<="),
    "ginvert.output_compatibility": (1e-9, "<="),
    "ginvert.ch_degree0": (0.0, "<="),
    "ginvert.ch_positive": (1e-7, "<="),
    "ginvert.total_kind": (0.0, "<="),
    "ginvert.total_det": (1e-10, ">"),
    "ginvert.holonomy_form": (1e-6, "<="),
    "ginvert.holonomy_det": (1e-6, "<="),
    "venice.residual": (1e-9, "<="),
    "venice.double_compatibility": (1e-12, "<="),
    "venice.dual_parity": (1e-10, "<="),
    "holonomy.min_abs_det": (1e-10, ">"),
    "holonomy.reversal": (1e-8, "<="),
    "holonomy.composition": (1e-9, "<="),
    "holonomy.gauge_covariance": (1e-7, "<="),
    "holonomy.convergence_min": (12.0, ">="),
    "holonomy.group_form": (1e-6, "<="),
    "holonomy.group_det": (1e-6, "<="),
    "cs.transgression": (1e-8, "<="),
    "cs.self": (0.0, "<="),
    "cs.functoriality": (1e-8, "<="),
    "calculus.jet_fd": (1e-7, "<="),
    "calculus.gauge_invariance": (1e-9, "<="),
    "calculus.ch_closedness": (1e-8, "<="),
    "calculus.dual_parity": (1e-10, "<="),
    "ranks.composition": (0.0, "<="),
}

# per-degree checks are named "<base>_<suffix>" and share the base tolerance
_FAMILIES = ("venice.residual", "venice.dual_parity", "venice.double_compatibility", "calculus.dual_parity")


def tolerance_key(name: str) -> str:
    if name in CHECKS:
        return name
    for base in _FAMILIES:
        if name.startswith(base + "_"):
            return base
    raise KeyError(name)


def _compare(value: float, tol: float, relation: str) -> bool:
    if value is None or not math.isfinite(value):
        return False
    return {"<=": value <= tol, ">=": value >= tol, ">": value > tol}[relation]


@dataclass
class Check:
    name: str
    value: float | None
    tolerance: float
    relation: str
    passed: bool
    samples: int
    message: str = ""
    wall_time: float | None = None

    def as_dict(self, timing: bool) -> dict:
        d = {
            "name": self.name,
            "value": self.value,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "passed": self.passed,
            "samples": self.samples,
        }
        if self.message:
            d["message"] = self.message
        if timing and self.wall_time is not None:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class Report:
    """Records for one scenario; tolerance overrides are looked up by check name."""

    command: str
    scenario: str
    settings: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    checks: dict[str, Check] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)

    def tolerance(self, name: str) -> tuple[float, str]:
        key = tolerance_key(name)
        tol, rel = CHECKS[key]
        if name in self.overrides:
            return float(self.overrides[name]), rel
        return float(self.overrides.get(key, tol)), rel

    def check(self, name: str, value, samples: int = 0, message: str = "", wall_time=None) -> Check:
        if name in self.checks:
            raise ValueError(f"check {name} recorded twice")
        tol, rel = self.tolerance(name)
        v = None if value is None else float(value)
        if v is not None and not math.isfinite(v):
            message = message or f"non-finite value {v}"
            v = None
        c = Check(name, v, tol, rel, _compare(v, tol, rel), int(samples), message, wall_time)
        self.checks[name] = c
        return c

    def fail(self, name: str, message: str, samples: int = 0) -> Check:
        """A check that could not produce a value (construction or evaluation failure)."""
        tol, rel = self.tolerance(name)
        c = Check(name, None, tol, rel, False, samples, message)
        self.checks[name] = c
        return c

    def note(self, name: str, value) -> None:
        self.info[name] = value

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def as_dict(self, timing: bool = False) -> dict:
        return {
            "command": self.command,
            "scenario": self.scenario,
            "settings": self.settings,
            "tolerances": {name: self.tolerance(name)[0] for name in sorted(self.checks)},
            "checks": [self.checks[k].as_dict(timing) for k in sorted(self.checks)],
            "info": {k: self.info[k] for k in sorted(self.info)},
            "passed": self.passed,
        }


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.3e}"
    return str(v)


def emit_structured(reports: list[Report], timing: bool = False) -> bytes:
    doc = {
        "defaults": {k: CHECKS[k][0] for k in sorted(CHECKS)},
        "passed": all(r.passed for r in reports),
        "reports": [r.as_dict(timing) for r in reports],
    }
    return (json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n").encode()


def emit_text(reports: list[Report], timing: bool = False) -> bytes:
    lines = []
    for r in reports:
        s = r.settings
        head = " ".join(f"{k}={s[k]}" for k in sorted(s) if k != "tolerances")
        lines.append(f"== {r.command} {r.scenario} ({head})")
        for name in sorted(r.checks):
            c = r.checks[name]
            tag = "PASS" if c.passed else "FAIL"
            line = f"{tag}  {name:<42} {_fmt(c.value):>11} {c.relation} {c.tolerance:.1e}"
            if timing and c.wall_time is not None:
                line += f"  [{c.wall_time:.2f}s]"
            if c.message:
                line += f"  ({c.message})"
            lines.append(line)
        for name in sorted(r.info):
            lines.append(f"INFO  {name:<42} {_fmt(r.info[name])}")
        n_ok = sum(c.passed for c in r.checks.values())
        lines.append(f"result: {'PASS' if r.passed else 'FAIL'} ({n_ok}/{len(r.checks)} checks)")
    return ("\n".join(lines) + "\n").encode()
