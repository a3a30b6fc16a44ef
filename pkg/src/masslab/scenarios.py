"""Built-in metric scenario families and run configuration.

Configuration files are TOML; every tolerance used by a pipeline check is
explicit in the resolved config (library defaults are filled in and recorded
before hashing, so identical configs give bitwise-identical reports).
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import sympy as sp

from . import metrics
from .domains import Domain, HALF_SPACE, QUARTER_SPACE

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = ("euclidean", "schwarzschild_half", "glued_schwarzschild_flat",
             "compact_perturbation", "quarter_schwarzschild",
             "custom_expression")

#: tolerances every pipeline run resolves explicitly (no hidden defaults)
DEFAULT_TOLERANCES = {
    "euclidean_mass": 1e-12,
    "matching": 1e-10,
    "decay_margin": 0.2,
    "mollify_band_slack": 1.05,
    "jump_band_rel": 0.05,
    "control_variation": 2.0,
    "boundary_mean": 1e-6,
    "certificate": 1e-3,
    "mass_shift_rel": 0.02,
    "gap_rel": 0.02,
    "positivity_floor": -1e-9,
    "doubling_ratio": 1e-10,
    "interface_c2": 1e-5,
    "mass_oracle_rel": 0.005,
}

DEFAULT_MASS_RADII = (12.0, 14.0, 15.8)
DEFAULT_DELTAS = (0.2, 0.1, 0.05)


def builtin_metric(name: str, params: Optional[dict] = None) -> metrics.MetricField:
    """Construct a built-in scenario field.

    glued_schwarzschild_flat defaults to m = 2 so the collar half-width 2.0
    (hence delta up to 0.2 under delta <= eps/10) fits inside the interior
    arclength r0 (1 + m/(2 r0))^2.
    """
    params = dict(params or {})
    n = int(params.pop("n", 3))
    if name == "euclidean":
        return metrics.euclidean(n)
    if name == "schwarzschild_half":
        return metrics.schwarzschild_half(m=float(params.pop("m", 1.0)), n=n)
    if name == "glued_schwarzschild_flat":
        return metrics.glued_schwarzschild_flat(
            m=float(params.pop("m", 2.0)), r0=float(params.pop("r0", 2.0)), n=n)
    if name == "compact_perturbation":
        return metrics.compact_perturbation(
            amplitude=float(params.pop("amplitude", 0.1)),
            center=float(params.pop("center", 4.0)),
            width=float(params.pop("width", 1.0)), n=n)
    if name == "quarter_schwarzschild":
        return metrics.schwarzschild_half(m=float(params.pop("m", 1.0)), n=n)
    if name == "custom_expression":
        expr = params.pop("u", None)
        if not expr:
            raise ValueError("custom_expression needs a formula 'u' in r")
        return expression_metric(expr, n=n,
                                 tau=float(params.pop("tau", 1.0)))
    raise ValueError(f"unknown scenario {name!r} (choose from {SCENARIOS})")


_ALLOWED_FUNCS = {
    "exp": sp.exp, "sqrt": sp.sqrt, "log": sp.log, "sin": sp.sin,
    "cos": sp.cos, "tanh": sp.tanh, "Rational": sp.Rational, "pi": sp.pi,
}


def expression_metric(expr: str, n: int = 3, tau: float = 1.0,
                      name: Optional[str] = None) -> metrics.MetricField:
    """Conformally flat field u(r)^{4/(n-2)} delta from a closed-form radial
    expression (sums, products, powers, and the whitelisted radial functions);
    derivatives are taken symbolically."""
    r = sp.Symbol("r", positive=True)
    try:
        u_expr = sp.parse_expr(expr, local_dict={"r": r},
                               global_dict=dict(_ALLOWED_FUNCS),
                               evaluate=True)
    except Exception as exc:
        raise ValueError(f"cannot parse expression {expr!r}: {exc}") from exc
    free = u_expr.free_symbols - {r}
    if free:
        raise ValueError(f"expression may only use 'r'; found {free}")
    du_expr = sp.diff(u_expr, r)
    ddu_expr = sp.diff(du_expr, r)
    u_f, du_f, ddu_f = (sp.lambdify(r, e, modules="numpy")
                        for e in (u_expr, du_expr, ddu_expr))
    for probe in (0.5, 1.0, 2.0, 5.0, 12.0):
        if not np.isfinite(u_f(probe)) or u_f(probe) <= 0.0:
            raise ValueError(f"expression factor not positive at r = {probe}")
    return metrics.radial_conformal(
        lambda rr: float(u_f(rr)), lambda rr: float(du_f(rr)),
        lambda rr: float(ddu_f(rr)), n=n, tau=tau,
        name=name or f"custom({expr})")


@dataclass
class ScenarioConfig:
    scenario: str = "glued_schwarzschild_flat"
    params: dict = dc_field(default_factory=dict)
    domain: Domain = dc_field(
        default_factory=lambda: Domain(HALF_SPACE, 3, 2.0, 16.0, 1.0 / 16.0))
    deltas: tuple = DEFAULT_DELTAS
    epsilon: float = 2.0
    pipeline: str = "theorem1"
    strict_positivity: bool = True
    mass_radii: tuple = DEFAULT_MASS_RADII
    flatten_cut: float = 4.0
    tolerances: dict = dc_field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    enable_spec_jump_check: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        missing = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if missing:
            raise ValueError(f"unknown tolerance keys {sorted(missing)}")
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances)
        self.tolerances = tol
        if self.pipeline not in ("theorem1", "theorem2"):
            raise ValueError("pipeline must be 'theorem1' or 'theorem2'")
        if self.pipeline == "theorem2" and self.domain.kind != QUARTER_SPACE:
            self.domain = Domain(QUARTER_SPACE, self.domain.n,
                                 self.domain.r_inner, self.domain.r_outer,
                                 self.domain.h)

    def field(self) -> metrics.MetricField:
        return builtin_metric(self.scenario, self.params)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "params": dict(sorted(self.params.items())),
            "domain": {"kind": self.domain.kind, "n": self.domain.n,
                       "r_inner": self.domain.r_inner,
                       "r_outer": self.domain.r_outer, "h": self.domain.h},
            "deltas": list(self.deltas),
            "epsilon": self.epsilon,
            "pipeline": self.pipeline,
            "strict_positivity": self.strict_positivity,
            "mass_radii": list(self.mass_radii),
            "flatten_cut": self.flatten_cut,
            "tolerances": dict(sorted(self.tolerances.items())),
            "enable_spec_jump_check": self.enable_spec_jump_check,
        }

    def hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> ScenarioConfig:
    """Read a TOML run configuration."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    scen = raw.get("scenario", {})
    name = scen.pop("name", "glued_schwarzschild_flat")
    dom_raw = raw.get("domain", {})
    domain = Domain(
        dom_raw.get("kind", HALF_SPACE), int(dom_raw.get("n", 3)),
        float(dom_raw.get("r_inner", 2.0)), float(dom_raw.get("r_outer", 16.0)),
        float(dom_raw.get("h", 1.0 / 16.0)))
    mol = raw.get("mollifier", {})
    pipe = raw.get("pipeline", {})
    return ScenarioConfig(
        scenario=name, params=scen, domain=domain,
        deltas=tuple(mol.get("deltas", DEFAULT_DELTAS)),
        epsilon=float(mol.get("epsilon", 2.0)),
        pipeline=pipe.get("name", "theorem1"),
        strict_positivity=bool(pipe.get("strict_positivity", True)),
        mass_radii=tuple(raw.get("mass", {}).get("radii", DEFAULT_MASS_RADII)),
        flatten_cut=float(raw.get("flatten", {}).get("R_cut", 4.0)),
        tolerances=dict(raw.get("tolerances", {})),
        enable_spec_jump_check=bool(pipe.get("enable_spec_jump_check", False)))
