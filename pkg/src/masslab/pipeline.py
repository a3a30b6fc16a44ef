"""Configuration-driven verification pipelines and report emission.

A report is a plain nested dict: provenance, ordered stages, per-check
entries carrying value/tolerance/pass, and mass-sample series for CSV
emission.  Reports are deterministic for a fixed config (fixed node orders,
no timestamps); floats are serialized with 17 significant digits, which
round-trips doubles exactly.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from . import collar as collar_mod
from . import conformal, doubling, geometry, mass as mass_mod, metrics
from . import radial_solver
from .collar import MollifierSpec
from .domains import Domain, QUARTER_SPACE
from .elliptic import SolverError
from .quadrature import QuadratureSpec
from .scenarios import ScenarioConfig

GAP_CHECK_RADII = (30.0, 42.0, 60.0)


class PipelineError(Exception):
    pass


def _check(name: str, value, tol, passed: bool, enabled: bool = True,
           note: str = "") -> dict:
    entry = {"name": name, "value": value, "tolerance": tol,
             "passed": bool(passed), "enabled": bool(enabled)}
    if note:
        entry["note"] = note
    return entry


def _stage(report: dict, name: str) -> dict:
    stage = {"checks": [], "data": {}}
    report["stages"][name] = stage
    return stage


def _mass_series(estimate: mass_mod.MassEstimate) -> dict:
    return {
        "radii": [s.rho for s in estimate.samples],
        "flux": [s.flux_term for s in estimate.samples],
        "boundary": [list(s.boundary_terms) for s in estimate.samples],
        "total": [s.total for s in estimate.samples],
        "m_infinity": estimate.m_infinity,
        "fit_exponent": estimate.fit_exponent,
        "fit_residual": estimate.fit_residual,
    }


def safe_collar_epsilon(field: metrics.MetricField, domain: Domain,
                        requested: float) -> float:
    """Cap the collar half-width so the inward flow stays inside the domain:
    2 eps must not exceed the interior arclength from the interface to the
    center (with margin)."""
    from numpy.polynomial.legendre import leggauss

    prof = field.piece("minus").radial
    if prof is None:
        return requested
    xs, ws = leggauss(64)
    r0 = domain.r_inner
    rr = 0.5 * r0 * (xs + 1.0)
    s_int = 0.5 * r0 * float(np.dot(ws, [prof.A(float(t)) ** 0.5 for t in rr]))
    return min(requested, 0.45 * s_int)


def run_pipeline(config: ScenarioConfig) -> dict:
    report = {
        "provenance": {
            "config": config.as_dict(),
            "config_hash": config.hash(),
            "package": "masslab",
        },
        "pipeline": config.pipeline,
        "stages": {},
        "passed": True,
    }
    try:
        if config.pipeline == "theorem1":
            _run_theorem1(config, report)
        else:
            _run_theorem2(config, report)
    except (PipelineError, SolverError, collar_mod.CollarError,
            doubling.DoublingError, ValueError) as exc:
        report["error"] = f"{type(exc).__name__}: {exc}"
        report["passed"] = False
    report["passed"] = report["passed"] and all(
        c["passed"] for st in report["stages"].values()
        for c in st["checks"] if c["enabled"])
    return report


# -- theorem-1 chain -----------------------------------------------------------

def _run_theorem1(config: ScenarioConfig, report: dict) -> None:
    tol = config.tolerances
    dom = config.domain
    field = config.field()

    st = _stage(report, "build")
    probes = [np.array([1.3, 0.4, 0.2]), np.array([0.0, 2.5, 1.0]),
              np.array([dom.r_inner, 0.0, 0.0])]
    pd_ok = True
    for p in probes:
        g = metrics.metric_eval(field, p)
        pd_ok = pd_ok and bool(np.linalg.eigvalsh(g)[0] > 0.0)
    st["checks"].append(_check("positive_definite_probes", pd_ok, True, pd_ok))
    if isinstance(field, metrics.TwoPieceMetricField):
        defect = field.continuity_defect(np.array([[1.0, 0.0, 0.0],
                                                   [0.3, 0.8, 0.52],
                                                   [0.0, 0.6, 0.8]]))
        st["checks"].append(_check("interface_continuity", defect,
                                   tol["matching"], defect <= tol["matching"]))

    st = _stage(report, "decay")
    radii = tuple(0.55 * dom.r_outer * (1.25 ** k) for k in range(3))
    fit = geometry.decay_profile(field, radii)
    st["data"]["tau_hat"] = fit.tau_hat
    st["data"]["C_hat"] = fit.C_hat
    st["checks"].append(_check(
        "decay_order", fit.tau_hat, field.tau - tol["decay_margin"],
        not fit.violates_declared,
        note=f"declared tau = {field.tau}"))

    st = _stage(report, "collar")
    eps = safe_collar_epsilon(field, dom, config.epsilon)
    chart = collar_mod.build_collar_field(field, dom, epsilon=eps)
    st["data"]["epsilon"] = eps
    x0 = dom.r_inner * np.array([0.6, 0.64, 0.48])
    z = chart.to_ambient(x0, 0.37 * eps)
    x1, t1 = chart.from_ambient(z)
    rt = float(np.linalg.norm(x1 - x0) + abs(t1 - 0.37 * eps))
    st["checks"].append(_check("collar_round_trip", rt, 1e-10, rt < 1e-10))
    st["checks"].append(_check("xi_boundary_tangent",
                               float(chart.xi(np.array([0.0, 2.3, 0.7]))[0]),
                               0.0, chart.xi(np.array([0.0, 2.3, 0.7]))[0] == 0.0))

    deltas = tuple(min(d, eps / 10.0) for d in config.deltas)
    st["data"]["deltas"] = list(deltas)

    st = _stage(report, "mollify")
    mollified = {}
    sup_band = []
    for d in deltas:
        mm = collar_mod.mollify_metric(field, chart, MollifierSpec(delta=d))
        mollified[d] = mm
        zed = chart.to_ambient(x0, 0.6 * d)
        bitwise = bool(np.array_equal(mm.eval(zed), field.eval(zed)))
        st["checks"].append(_check(f"bitwise_outside_band_delta={d:g}",
                                   bitwise, True, bitwise))
        worst = 0.0
        for t in np.linspace(-d / 2, d / 2, 41):
            zz = chart.to_ambient(x0, float(t))
            worst = max(worst, float(np.abs(mm.eval(zz) - field.eval(zz)).max()))
        sup_band.append(worst)
    st["data"]["sup_band"] = sup_band
    monotone = all(sup_band[i + 1] <= sup_band[i] * tol["mollify_band_slack"]
                   + 1e-15 for i in range(len(sup_band) - 1))
    st["checks"].append(_check("band_closeness_monotone", sup_band,
                               tol["mollify_band_slack"], monotone))

    st = _stage(report, "curvature_control")
    controls = {}
    for d in deltas:
        rep = collar_mod.curvature_control_report(
            mollified[d], field, chart, MollifierSpec(delta=d))
        controls[d] = rep
        st["data"][f"delta={d:g}"] = {
            "band_integral": rep.band_integral,
            "jump_mean": float(np.mean(list(rep.jump_samples.values()))),
            "singular_scale": rep.singular_scale,
            "singular_fit_error": rep.singular_fit_error,
            "smooth_bound": rep.smooth_bound,
            "boundary_mean_bound": rep.boundary_mean_bound,
        }
    smooth = [controls[d].smooth_bound for d in deltas]
    stable = max(smooth) <= tol["control_variation"] * min(smooth) + 1e-12
    st["checks"].append(_check("remainder_2x_stable", smooth,
                               tol["control_variation"], stable))
    bdry = max(controls[d].boundary_mean_bound for d in deltas)
    st["checks"].append(_check("boundary_mean_bound", bdry,
                               tol["boundary_mean"],
                               bdry <= tol["boundary_mean"]))
    jump_mean = float(np.mean(list(controls[deltas[-1]].jump_samples.values())))
    fit_err = controls[deltas[-1]].singular_fit_error
    has_jump = abs(jump_mean) > 1e-8
    st["checks"].append(_check(
        "spike_integral_vs_displayed_jump", fit_err, tol["jump_band_rel"],
        (fit_err <= tol["jump_band_rel"]) if has_jump else True,
        enabled=config.enable_spec_jump_check,
        note="the band integral measures 2x the displayed coefficient; "
             f"fitted scale = {controls[deltas[-1]].singular_scale:.6f}"))
    if has_jump:
        scale_err = abs(controls[deltas[-1]].singular_scale - 2.0)
        st["checks"].append(_check("spike_integral_vs_2x_jump", scale_err,
                                   tol["jump_band_rel"],
                                   scale_err <= tol["jump_band_rel"]))

    st = _stage(report, "solve_correction")
    solutions = {}
    sups = []
    for d in deltas:
        sol = radial_solver.solve_mollified_correction(mollified[d], dom)
        solutions[d] = sol
        sups.append(sol.sup_abs)
        st["data"][f"delta={d:g}"] = {
            "sup_w": sol.sup_abs, "residual": sol.residual_interior,
            "decay_fit": sol.decay_fit,
            "norm_report": sol.weighted_norm_report,
        }
    trend = all(sups[i + 1] <= sups[i] * 1.05 + 1e-12
                for i in range(len(sups) - 1))
    st["checks"].append(_check("sup_w_decreasing", sups, 1.05, trend))
    positive = all(s < 1.0 for s in sups)
    st["checks"].append(_check("u_positive", max(sups), 1.0, positive))

    st = _stage(report, "corrected_metric")
    d_min = deltas[-1]
    tilde, cert = conformal.corrected_metric(
        mollified[d_min], solutions[d_min], certificate_tol=tol["certificate"])
    st["data"]["certificate"] = {
        "min_scalar": cert.min_scalar,
        "min_boundary_mean": cert.min_boundary_mean,
        "min_boundary_mean_averaged": cert.min_boundary_mean_averaged,
    }
    st["checks"].append(_check("scalar_certificate", cert.min_scalar,
                               -tol["certificate"], cert.passed))

    st = _stage(report, "mass_shift")
    spec = QuadratureSpec(n_theta=32, n_phi=64)
    m_g = mass_mod.mass_estimate(field, config.mass_radii, spec=spec,
                                 h=dom.h)
    m_t = mass_mod.mass_estimate(tilde, config.mass_radii, spec=spec,
                                 h=dom.h)
    mm = mollified[d_min]

    def R_minus_at(x: np.ndarray) -> float:
        s = mm.band_t(x)
        if np.isfinite(s) and abs(s) <= 2.0 * chart.epsilon - 1e-12:
            return max(-mm.warp.scalar_curvature(float(s)), 0.0)
        return 0.0

    breaks = (float(chart.rho_of_t(-d_min / 2)),
              float(chart.rho_of_t(d_min / 2)))
    shift = mass_mod.conformal_mass_shift(
        mm, u=tilde.u_ambient, grad_u=tilde.grad_u_ambient, domain=dom,
        R_minus=R_minus_at, breaks=breaks)
    mass_diff = m_g.m_infinity - m_t.m_infinity
    scale = max(abs(m_g.m_infinity), abs(shift.value), 1e-9)
    st["data"]["mass_g"] = _mass_series(m_g)
    st["data"]["mass_tilde"] = _mass_series(m_t)
    st["data"]["shift_integral"] = shift.value
    st["data"]["shift_tail"] = shift.tail_estimate
    err = abs(mass_diff - shift.value)
    st["checks"].append(_check("mass_shift_identity", err,
                               tol["mass_shift_rel"] * scale,
                               err <= tol["mass_shift_rel"] * scale))

    st = _stage(report, "mass")
    st["data"]["mass_g"] = _mass_series(m_g)
    floor = -(tol["euclidean_mass"] + 10.0 * abs(m_g.fit_residual))
    st["checks"].append(_check("mass_nonnegative", m_g.m_infinity, floor,
                               m_g.m_infinity >= floor))
    if config.scenario == "euclidean":
        exact = all(s.total == 0.0 for s in m_g.samples)
        st["checks"].append(_check("euclidean_mass_exact_zero",
                                   max(abs(s.total) for s in m_g.samples),
                                   tol["euclidean_mass"], exact))
    if config.scenario == "schwarzschild_half":
        oracle = mass_mod.schwarzschild_half_mass_oracle(
            float(config.params.get("m", 1.0)), dom.n)
        rel = abs(m_g.m_infinity - oracle) / abs(oracle)
        st["checks"].append(_check("mass_matches_oracle", rel,
                                   tol["mass_oracle_rel"],
                                   rel <= tol["mass_oracle_rel"]))
    if config.scenario == "glued_schwarzschild_flat":
        st["checks"].append(_check("strict_mass_positive", m_g.m_infinity,
                                   0.0, m_g.m_infinity > 0.0))

    if not config.strict_positivity:
        return

    st = _stage(report, "strict_positivity")
    z_sol = radial_solver.solve_strict_positivity(tilde, dom)
    st["data"]["v_min"] = z_sol.meta["v_min"]
    st["data"]["v_max"] = z_sol.meta["v_max"]
    ok_v = (z_sol.meta["v_min"] > 0.0
            and z_sol.meta["v_max"] <= 1.0 - tol["positivity_floor"])
    st["checks"].append(_check("v_in_unit_interval",
                               [z_sol.meta["v_min"], z_sol.meta["v_max"]],
                               [0.0, 1.0 - tol["positivity_floor"]], ok_v))
    hat, gap_rep = conformal.hat_metric(tilde, z_sol, dom)
    st["data"]["gap_energy"] = gap_rep.gap_energy
    st["data"]["hat_scalar_bound"] = gap_rep.scalar_bound
    jumpy = config.scenario == "glued_schwarzschild_flat"
    if jumpy:
        st["checks"].append(_check("mass_gap_positive", gap_rep.gap_energy,
                                   0.0, gap_rep.gap_energy > 0.0))
    m_t_far = mass_mod.mass_estimate(tilde, GAP_CHECK_RADII, spec=spec)
    m_h_far = mass_mod.mass_estimate(hat, GAP_CHECK_RADII, spec=spec)
    gap_mass = m_t_far.m_infinity - m_h_far.m_infinity
    gscale = max(abs(gap_mass), abs(gap_rep.gap_energy), 1e-9)
    gerr = abs(gap_mass - gap_rep.gap_energy)
    st["data"]["gap_mass_difference"] = gap_mass
    st["checks"].append(_check("gap_two_path_agreement", gerr,
                               tol["gap_rel"] * gscale,
                               gerr <= tol["gap_rel"] * gscale))


# -- theorem-2 chain ------------------------------------------------------------

def _run_theorem2(config: ScenarioConfig, report: dict) -> None:
    tol = config.tolerances
    dom = config.domain
    if dom.kind != QUARTER_SPACE:
        raise PipelineError("theorem2 pipeline needs a quarter-space domain")
    field = config.field()

    st = _stage(report, "build")
    g = metrics.metric_eval(field, np.array([1.0, 0.5, 0.7]))
    st["checks"].append(_check("positive_definite_probe",
                               float(np.linalg.eigvalsh(g)[0]), 0.0,
                               bool(np.linalg.eigvalsh(g)[0] > 0)))

    st = _stage(report, "flatten")
    flat = conformal.conformally_flatten(field, config.flatten_cut, dom)
    st["data"]["K_radius"] = flat.K_radius
    st["data"]["mass_drift"] = flat.mass_drift
    st["data"]["v_amplitude"] = flat.v_amplitude
    certs = flat.curvature_certificates
    st["data"]["certificates"] = certs
    st["checks"].append(_check("flatten_scalar_certificate", certs["min_R"],
                               -tol["certificate"],
                               certs["min_R"] >= -tol["certificate"]))
    st["checks"].append(_check("conformally_flat_outside_K",
                               certs["flat_beyond"], 1e-10,
                               certs["flat_beyond"] <= 1e-10))

    st = _stage(report, "double")
    cfg = doubling.double_manifold(flat.g_eps, dom, K_radius=flat.K_radius)
    z = np.array([2.0, 1.0, -0.5])
    zm = np.array([2.0, 1.0, 0.5])
    sym = float(np.abs(cfg.doubled.eval(z)
                       - cfg.doubled.eval(zm)).max())
    st["checks"].append(_check("reflection_evaluator_symmetric", sym, 1e-14,
                               sym < 1e-14,
                               note="radial conformally flat: mirror "
                                    "components coincide"))

    st = _stage(report, "interface")
    probe_r = flat.K_radius * 1.2
    probes = [np.array([probe_r, 0.0, 0.0]),
              np.array([probe_r * 0.8, probe_r * 0.6, 0.0])]
    irep = doubling.check_c2_across_interface(cfg, probes, h=dom.h,
                                              tol=tol["interface_c2"])
    st["data"]["max_gan_defect"] = irep.max_gan_defect
    st["data"]["max_gijn_defect"] = irep.max_gijn_defect
    st["checks"].append(_check("fermi_c2_criteria",
                               [irep.max_gan_defect, irep.max_gijn_defect],
                               tol["interface_c2"], irep.passed))
    chart = doubling.extend_interface(cfg.doubled, 1.25 * flat.K_radius,
                                      flat.K_radius)
    st["data"]["interface_radius"] = chart.radius

    st = _stage(report, "mass_relation")
    radii = [r for r in config.mass_radii if r > flat.K_radius]
    if len(radii) < 2:
        radii = [flat.K_radius * 1.3, flat.K_radius * 1.6]
    rel = doubling.doubled_mass_relation(cfg, radii, h=dom.h)
    st["data"]["radii"] = list(rel.radii)
    st["data"]["m_corner"] = list(rel.m_corner)
    st["data"]["m_doubled"] = list(rel.m_doubled)
    st["data"]["ratios"] = list(rel.ratios)
    st["checks"].append(_check("doubling_factor_two", rel.max_ratio_defect,
                               tol["doubling_ratio"],
                               rel.max_ratio_defect <= tol["doubling_ratio"]))

    st = _stage(report, "mass")
    est = mass_mod.mass_estimate(flat.g_eps, radii, kind=QUARTER_SPACE,
                                 h=dom.h)
    st["data"]["corner_mass"] = _mass_series(est)
    floor = -(tol["euclidean_mass"] + 10.0 * abs(est.fit_residual))
    st["checks"].append(_check("corner_mass_nonnegative", est.m_infinity,
                               floor, est.m_infinity >= floor))


# -- emission ---------------------------------------------------------------------

def _format_tree(obj):
    if isinstance(obj, dict):
        return {k: _format_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_format_tree(v) for v in obj]
    if isinstance(obj, (bool, int, str)) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_format_tree(v) for v in obj.tolist()]
    return str(obj)


def _dump_json(obj, indent: int = 0) -> str:
    """Canonical JSON with floats at 17 significant digits (round-trip exact)."""
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  {json.dumps(str(k))}: {_dump_json(v, indent + 2)}'
            for k, v in obj.items())
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        items = ",\n".join(f"{pad}  {_dump_json(v, indent + 2)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not np.isfinite(obj):
            return json.dumps(str(obj))
        text = format(obj, ".17g")
        return text
    return json.dumps(obj)


def report_json(report: dict) -> str:
    return _dump_json(_format_tree(report)) + "\n"


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _mass_series_entries(report: dict):
    for stage_name, stage in report.get("stages", {}).items():
        for key, val in stage.get("data", {}).items():
            if isinstance(val, dict) and "radii" in val and "total" in val:
                yield f"{stage_name}_{key}", val


def emit_report(report: dict, fmt: str = "json", path=None,
                figures: bool = True):
    """Serialize a report: one structured document plus one CSV per mass
    series, with matplotlib figures rendered alongside.

    Returns the list of files written (empty for stdout emission).
    """
    import pathlib

    written = []
    if path is None:
        return report_json(report) if fmt == "json" else _report_csv(report)
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path.write_text(report_json(report), encoding="utf-8")
        written.append(path)
    elif fmt == "csv":
        path.write_text(_report_csv(report), encoding="utf-8")
        written.append(path)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    stem = path.with_suffix("")
    for label, series in _mass_series_entries(report):
        csv_path = pathlib.Path(f"{stem}_{label}.csv")
        csv_path.write_text(_series_csv(series), encoding="utf-8")
        written.append(csv_path)
    if figures:
        from . import plotting

        written.extend(plotting.render_report(report, stem))
    return written


def _series_csv(series: dict) -> str:
    nb = max((len(b) for b in series["boundary"]), default=0)
    header = ["rho", "flux"] + [f"boundary_{i + 1}" for i in range(nb)] \
        + ["total"]
    lines = [",".join(header)]
    for i, rho in enumerate(series["radii"]):
        row = [format(rho, ".17g"), format(series["flux"][i], ".17g")]
        row += [format(b, ".17g") for b in series["boundary"][i]]
        row += [format(series["total"][i], ".17g")]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _report_csv(report: dict) -> str:
    lines = ["stage,check,value,tolerance,passed,enabled"]
    for stage_name, stage in report.get("stages", {}).items():
        for c in stage["checks"]:
            lines.append(",".join([
                stage_name, c["name"],
                json.dumps(_scalarize(c["value"])),
                json.dumps(_scalarize(c["tolerance"])),
                str(c["passed"]), str(c["enabled"])]))
    return "\n".join(lines) + "\n"


def _scalarize(v):
    if isinstance(v, (list, tuple)):
        return "|".join(str(x) for x in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)
