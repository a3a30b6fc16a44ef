"""Conformal transformation laws and the corrected-metric constructions.

The module fixes the trace convention for mean curvature (H = trace of the
second fundamental form, no 1/(n-1) averaging) and uses the laws

    R~  = c_n^{-1} u^{-(n+2)/(n-2)} (-Delta_g u + c_n R_g u)
    H~  = u^{-n/(n-2)} (u H + (1/(2 c_n)) du/deta)

for g~ = u^{4/(n-2)} g, with c_n = (n-2)/(4(n-1)).  Certificates also store
the (n-1)-averaged value alongside the trace value to guard against
convention drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import geometry, mass as mass_mod, quadrature as quadr
from .collar import MollifiedMetricField
from .domains import Domain, HALF_SPACE, QUARTER_SPACE
from .elliptic import BvpSolution, ScalarField
from .metrics import MetricField, RadialProfile, from_radial_profile


def c_n(n: int) -> float:
    return (n - 2) / (4.0 * (n - 1))


@dataclass
class ConformalFactor:
    """A positive factor u with decay order gamma for u - 1."""

    u: ScalarField
    gamma: float = -1.0

    def __post_init__(self):
        for p in (np.array([0.7, 0.4, 0.3]), np.array([3.0, 1.0, -2.0])):
            if self.u(p) <= 0.0:
                raise ValueError("conformal factor must be positive")

    def __call__(self, x) -> float:
        return self.u(x)


def laplace_beltrami(field: MetricField, u: ScalarField, x: np.ndarray,
                     h: float, side: Optional[str] = None) -> float:
    """Delta_g u = g^{ab}(d_a d_b u - Gamma^c_{ab} d_c u) at a point."""
    x = np.asarray(x, dtype=float)
    g = field.eval(x, side=side)
    ginv = np.linalg.inv(g)
    gamma = geometry.christoffel(field, x, h, side=side)
    hess = u.hess(x, h)
    grad = u.grad(x, h)
    cov = hess - np.einsum("cab,c->ab", gamma, grad)
    return float(np.einsum("ab,ab->", ginv, cov))


def conformal_scalar(field: MetricField, u, x: np.ndarray, h: float,
                     side: Optional[str] = None,
                     R_g: Optional[float] = None) -> float:
    """Scalar curvature of u^{4/(n-2)} g by the transformation law."""
    if isinstance(u, ConformalFactor):
        u = u.u
    x = np.asarray(x, dtype=float)
    n = field.n
    cn = c_n(n)
    ux = u(x)
    if ux <= 0.0:
        raise ValueError("conformal factor must be positive at the stencil")
    lap = laplace_beltrami(field, u, x, h, side=side)
    if R_g is None:
        R_g = geometry.scalar_curvature(field, x, h, side=side)
    return float(ux ** (-(n + 2.0) / (n - 2.0)) * (-lap + cn * R_g * ux) / cn)


def conformal_mean_curvature(field: MetricField, u,
                             surf: geometry.HypersurfaceChart, x: np.ndarray,
                             h: float, side: Optional[str] = None,
                             H_g: Optional[float] = None) -> float:
    """Mean curvature (trace convention) of the boundary face under
    g -> u^{4/(n-2)} g."""
    if isinstance(u, ConformalFactor):
        u = u.u
    x = np.asarray(x, dtype=float)
    n = field.n
    ux = u(x)
    if ux <= 0.0:
        raise ValueError("conformal factor must be positive at the stencil")
    if H_g is None:
        H_g = geometry.mean_curvature(field, surf, x, h, side=side)
    nu = geometry.unit_normal(field, surf, x, side=side)
    du_eta = float(nu @ u.grad(x, h))
    return float(ux ** (-n / (n - 2.0))
                 * (ux * H_g + du_eta / (2.0 * c_n(n))))


def transformed_field(field: MetricField, u: ScalarField,
                      n: Optional[int] = None) -> MetricField:
    """The metric u^{4/(n-2)} g as a plain evaluator field (for cross-checks
    against direct curvature computations)."""
    n = n if n is not None else field.n
    k = 4.0 / (n - 2)

    def g(x):
        return u(x) ** k * field.eval(x)

    return MetricField(n, g=g, tau=field.tau, C_decay=field.C_decay,
                       name=f"{field.name}*u^{{4/(n-2)}}")


# -- corrected metrics from solved corrections ---------------------------------

class CorrectedMetricField(MetricField):
    """g~ = u^{4/(n-2)} g_delta with u = 1 + w from a radial correction solve.

    Carries the radial data needed by the strict-positivity solve: the base
    mollified field and the profile u(s), u'(s) in the collar arclength
    gauge.
    """

    def __init__(self, base_delta: MollifiedMetricField, w_solution: BvpSolution):
        super().__init__(base_delta.n, g=None, mode="corrected",
                         tau=base_delta.tau, C_decay=base_delta.C_decay,
                         name=f"{base_delta.name}~")
        self.base_delta = base_delta
        self.w_solution = w_solution
        self._radial = w_solution.meta.get("radial")
        if self._radial is None:
            raise ValueError("corrected_metric needs a radial BvpSolution")
        self.interface_radius = base_delta.interface_radius

    # conformal profile in the collar gauge
    def u_of_s(self, s: float) -> float:
        return 1.0 + float(self._radial.w_of_s(s))

    def du_ds(self, s: float) -> float:
        return float(self._radial.dw_ds(s))

    def u_ambient(self, x) -> float:
        return 1.0 + self._radial.ambient(x)

    def grad_u_ambient(self, x) -> np.ndarray:
        return self._radial.grad_ambient(x)

    def eval(self, x: np.ndarray, side=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = 4.0 / (self.n - 2)
        return self.u_ambient(x) ** k * self.base_delta.eval(x, side=side)

    def d_eval(self, x: np.ndarray, side=None):
        """Product-rule derivatives outside the mollification band (the band
        itself is served by the collar gauge)."""
        x = np.asarray(x, dtype=float)
        base_d = self.base_delta.d_eval(x, side=side)
        if base_d is None:
            return None
        k = 4.0 / (self.n - 2)
        uval = self.u_ambient(x)
        du = self.grad_u_ambient(x)
        g = self.base_delta.eval(x, side=side)
        return (uval ** k * base_d
                + k * uval ** (k - 1)
                * np.einsum("ab,c->abc", g, du))


@dataclass(frozen=True)
class CurvatureCertificate:
    min_scalar: float
    min_boundary_mean: float
    min_boundary_mean_averaged: float
    tolerance: float
    passed: bool


def corrected_metric(field_delta: MollifiedMetricField,
                     w_solution: BvpSolution,
                     certificate_tol: float = 1e-8) -> tuple[CorrectedMetricField,
                                                             CurvatureCertificate]:
    """Assemble g~_delta = u^{4/(n-2)} g_delta and certify R >= -tol,
    H^{dM} >= -tol.

    R_{g~} is evaluated through the transformation law with the discrete
    correction: -Delta u + c_n R u = c_n R^+ u + (equation residual), so the
    certificate measures the solver's sign fidelity, with the curvature spike
    resolved on the radial grid.
    """
    out = CorrectedMetricField(field_delta, w_solution)
    n = out.n
    cn = c_n(n)
    radial = out._radial
    warp = field_delta.warp
    collar = field_delta.collar
    eps2 = 2.0 * collar.epsilon - 1e-12
    gauge = radial.gauge

    # R~ through the law with the DISCRETE u: Delta_{g_delta} u = u'' + H u'
    # in the collar gauge, so the certificate carries the solver's
    # discretization error rather than restating the closed form
    min_R = np.inf
    for s in radial.nodes[1:-1]:
        s = float(s)
        in_c = abs(s) <= eps2
        R_delta = warp.scalar_curvature(s) if in_c \
            else gauge.base_scalar_curvature(s)
        F = float(warp.F(s)) if in_c else gauge.F(s)
        dF = float(warp.dF(s)) if in_c else gauge.dF(s)
        H = (n - 1) * dF / (2.0 * F)
        uval = out.u_of_s(s)
        du = float(radial.spline(s, 1))
        ddu = float(radial.spline(s, 2))
        lap_u = ddu + H * du
        R_tilde = (uval ** (-(n + 2.0) / (n - 2.0))
                   * (-lap_u + cn * R_delta * uval) / cn)
        min_R = min(min_R, R_tilde)

    # boundary faces are totally geodesic for the radial warp and u is
    # radial: du/deta = 0 on the plane, so H~ = u^{-2/(n-2)} H^+ = 0
    H_tilde = 0.0
    cert = CurvatureCertificate(
        min_scalar=float(min_R), min_boundary_mean=H_tilde,
        min_boundary_mean_averaged=H_tilde / (n - 1),
        tolerance=certificate_tol,
        passed=bool(min_R >= -certificate_tol and H_tilde >= -certificate_tol))
    return out, cert


class HatMetricField(MetricField):
    """g^ = v^{4/(n-2)} g~ from the strict-positivity correction."""

    def __init__(self, tilde: CorrectedMetricField, z_solution: BvpSolution):
        super().__init__(tilde.n, g=None, mode="hat", tau=tilde.tau,
                         C_decay=tilde.C_decay, name=f"{tilde.name}^")
        self.tilde = tilde
        self.z_solution = z_solution
        self._radial = z_solution.meta.get("radial")
        self.interface_radius = tilde.interface_radius

    def v_ambient(self, x) -> float:
        return 1.0 + self._radial.ambient(x)

    def eval(self, x: np.ndarray, side=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = 4.0 / (self.n - 2)
        return self.v_ambient(x) ** k * self.tilde.eval(x, side=side)


@dataclass(frozen=True)
class MassGapReport:
    gap_energy: float
    v_min: float
    v_max: float
    scalar_bound: float
    scalar_bound_spike_rel: float
    boundary_bound: float


def hat_metric(field_tilde: CorrectedMetricField, z_solution: BvpSolution,
               domain: Domain) -> tuple[HatMetricField, MassGapReport]:
    """Assemble g^_delta and the mass-gap energy

        int_M [ (4(n-1)/(n-2)) |grad v|^2 + R_{g~} v^2 ] dv_{g~}
        + int_{dM} 2 H_{g~} v^2 dsigma

    which equals m(g~) - m(g^); it is strictly positive whenever R_{g~} has
    mass (the interface jump scenario)."""
    n = field_tilde.n
    k = 4.0 / (n - 2)
    base = field_tilde.base_delta
    warp = base.warp
    collar = base.collar
    zr = z_solution.meta["radial"]
    gauge = zr.gauge
    eps2 = 2.0 * collar.epsilon - 1e-12

    # radial energy integral in the collar gauge, on the solver's graded mesh
    nodes = zr.nodes
    vals = np.empty(len(nodes))
    hat_R_out = 0.0          # residual curvature outside the spike band
    hat_R_spike = 0.0        # residual inside, relative to the local scale
    spike_scale = 0.0
    a_band = 3.0 * base.delta ** 2 / 100.0
    cnv = c_n(n)
    for i, s in enumerate(nodes):
        s = float(s)
        in_c = abs(s) <= eps2
        F = float(warp.F(s)) if in_c else gauge.F(s)
        dF = float(warp.dF(s)) if in_c else gauge.dF(s)
        R_delta = warp.scalar_curvature(s) if in_c \
            else gauge.base_scalar_curvature(s)
        u = field_tilde.u_of_s(s)
        R_tilde = u ** (-k) * max(R_delta, 0.0)
        v = 1.0 + float(zr.w_of_s(s))
        dv = float(zr.dw_ds(s))
        # |grad v|^2_{g~} = g~^{ss} (dv/ds)^2 = u^{-k} dv^2
        grad2 = u ** (-k) * dv * dv
        dens = u ** (k * n / 2.0) * F ** ((n - 1) / 2.0)
        vals[i] = (4.0 * (n - 1) / (n - 2) * grad2 + R_tilde * v * v) * dens
        # residual curvature of g^: zero up to discretization
        if 0 < i < len(nodes) - 1:
            H = (n - 1) * dF / (2.0 * F)
            du = float(field_tilde.du_ds(s))
            ddv = float(zr.spline(s, 2))
            lap_tilde_v = u ** (-k) * (ddv + H * dv + 2.0 * du * dv / u)
            R_hat = (v ** (-(n + 2.0) / (n - 2.0))
                     * (-lap_tilde_v + cnv * R_tilde * v) / cnv)
            if abs(s) <= a_band:
                hat_R_spike = max(hat_R_spike, abs(R_hat))
                spike_scale = max(spike_scale, abs(R_tilde))
            else:
                hat_R_out = max(hat_R_out, abs(R_hat))
    from .elliptic import unit_sphere_area

    area_factor = 0.5 * unit_sphere_area(n)
    gap = float(np.trapezoid(vals, nodes)) * area_factor
    # boundary term: H_{g~} = 0 on the plane for radial scenarios

    v_nodes = 1.0 + zr.values
    out = HatMetricField(field_tilde, z_solution)
    report = MassGapReport(
        gap_energy=gap, v_min=float(v_nodes.min()), v_max=float(v_nodes.max()),
        scalar_bound=float(hat_R_out),
        scalar_bound_spike_rel=float(hat_R_spike / max(spike_scale, 1e-300)),
        boundary_bound=0.0)
    return out, report


# -- conformal flattening (quarter space) ----------------------------------------

def cutoff_chi(t: float) -> float:
    """Smooth cutoff: 1 for t <= 1, 0 for t >= 2."""
    if t <= 1.0:
        return 1.0
    if t >= 2.0:
        return 0.0
    s = t - 1.0
    a = np.exp(-1.0 / s)
    b = np.exp(-1.0 / (1.0 - s))
    return float(b / (a + b))


def _cutoff_derivs(t: float, eps: float = 1e-6) -> tuple[float, float]:
    d1 = (cutoff_chi(t + eps) - cutoff_chi(t - eps)) / (2.0 * eps)
    d2 = (cutoff_chi(t + eps) - 2.0 * cutoff_chi(t) + cutoff_chi(t - eps)) \
        / eps ** 2
    return d1, d2


@dataclass(frozen=True)
class FlatteningResult:
    g_eps: MetricField
    K_radius: float
    mass_drift: float
    curvature_certificates: dict
    v_amplitude: float


def conformally_flatten(field: MetricField, R_cut: float, domain: Domain,
                        mass_radii=(24.0, 32.0, 48.0)) -> FlatteningResult:
    """Deform a radial quarter-space field to one conformally flat outside
    2 R_cut with the same curvature signs, solving the linearized conformal
    problem for the blend g_R = chi_R g + (1 - chi_R) delta.

    Implemented for radially conformally flat inputs (all built-in quarter
    scenarios); the blend is then U_R(r) delta with U_R = chi_R u^{4/(n-2)}
    + 1 - chi_R, and the correction v_R is radial with Neumann-free faces.
    """
    if domain.kind != QUARTER_SPACE:
        raise ValueError("conformally_flatten expects a quarter-space domain")
    n = field.n
    if field.conformal_u is None or field.radial is None:
        raise NotImplementedError("flattening is implemented for radial "
                                  "conformally flat fields")
    if 2.0 * R_cut >= domain.r_outer:
        raise ValueError("R_cut too large for the truncated domain")
    k = 4.0 / (n - 2)
    cn = c_n(n)
    prof = field.radial

    def U(r: float) -> float:
        ch = cutoff_chi(r / R_cut)
        return ch * prof.A(r) + (1.0 - ch)

    def dU(r: float) -> float:
        ch = cutoff_chi(r / R_cut)
        d1, _ = _cutoff_derivs(r / R_cut)
        return ch * prof.dA(r) + d1 / R_cut * (prof.A(r) - 1.0)

    def ddU(r: float) -> float:
        ch = cutoff_chi(r / R_cut)
        d1, d2 = _cutoff_derivs(r / R_cut)
        return (ch * prof.ddA(r) + 2.0 * d1 / R_cut * prof.dA(r)
                + d2 / R_cut ** 2 * (prof.A(r) - 1.0))

    blended_profile = RadialProfile(A=U, B=U, dA=dU, dB=dU, ddA=ddU, ddB=ddU)
    g_R = from_radial_profile(blended_profile, n=n, tau=field.tau,
                              C_decay=field.C_decay, name="blend",
                              conformal_u=lambda r: U(r) ** (1.0 / k))

    # gamma_R = R_{g_R} - chi_R R_g, radial; solve L_R v = -c_n gamma_R
    from .collar import CollarChart
    from .radial_solver import RadialGauge, graded_nodes, _two_pass_solve, \
        RadialSolution
    from scipy.interpolate import CubicSpline

    collar = CollarChart(g_R, domain, epsilon=min(0.75, 0.2 * R_cut))
    gauge = RadialGauge(collar, r_min=0.02, r_max=4.0 * domain.r_outer)
    s_lo = float(gauge.s_of_r(0.9 * R_cut))
    s_hi = float(gauge.s_of_r(2.2 * R_cut))
    nodes = graded_nodes(gauge.s_min, gauge.s_max, delta=None, coarse=0.02,
                         refine=((s_lo, s_hi, 0.02),))

    def gamma_R_at(s: float) -> float:
        r = float(gauge.r_of_s(s))
        R_gR = gauge.base_scalar_curvature(s)
        ch = cutoff_chi(r / R_cut)
        # R_g of the input field in its own gauge: conformal law value
        R_g = _radial_scalar_curvature(field, r)
        return R_gR - ch * R_g

    # (4(n-1)/(n-2)) L_R v = -gamma_R with L_R = -Delta + c_n gamma_R reads
    # Delta v - c_n gamma_R v = +c_n gamma_R in the solver's sign convention
    gam = np.array([gamma_R_at(float(s)) for s in nodes])
    V_fn = lambda s: gauge.F(float(s)) ** ((n - 1) / 2.0)
    V = np.array([V_fn(float(s)) for s in nodes])
    c = cn * gam
    f = cn * gam
    # beyond 2 R_cut the blend is exactly flat and gamma_R = 0, so the
    # correction tail is a pure harmonic monopole: pin the closure exponent
    w, res, a_fit, g_eff = _two_pass_solve(nodes, V, V, c, f, gauge,
                                           gamma=-(n - 2) * 0.75,
                                           K_fn=V_fn, V_fn=V_fn,
                                           force_gamma=float(2 - n))
    v_sol = RadialSolution(gauge, nodes, w, CubicSpline(nodes, w))

    # g_eps = (1 + v)^k g_R: compose the conformal coefficient and its exact
    # derivatives from the blend closed forms and the correction spline
    def _v_r(r: float) -> tuple[float, float, float]:
        s = float(gauge.s_of_r(r))
        v = float(v_sol.w_of_s(s))
        dv_ds = float(v_sol.spline(s, 1))
        ddv_ds = float(v_sol.spline(s, 2))
        A = U(r)
        dA = dU(r)
        v_r = dv_ds * A ** 0.5
        v_rr = ddv_ds * A + dv_ds * dA / (2.0 * A ** 0.5)
        return v, v_r, v_rr

    def W(r: float) -> float:
        v, _, _ = _v_r(r)
        return (1.0 + v) ** k * U(r)

    def dW(r: float) -> float:
        v, v_r, _ = _v_r(r)
        return (k * (1.0 + v) ** (k - 1) * v_r * U(r)
                + (1.0 + v) ** k * dU(r))

    def ddW(r: float) -> float:
        v, v_r, v_rr = _v_r(r)
        return (k * (k - 1) * (1.0 + v) ** (k - 2) * v_r ** 2 * U(r)
                + k * (1.0 + v) ** (k - 1) * v_rr * U(r)
                + 2.0 * k * (1.0 + v) ** (k - 1) * v_r * dU(r)
                + (1.0 + v) ** k * ddU(r))

    def u_eps(r: float) -> float:
        return W(r) ** (1.0 / k)

    eps_profile = RadialProfile(A=W, B=W, dA=dW, dB=dW, ddA=ddW, ddB=ddW)
    g_eps = from_radial_profile(eps_profile, n=n, tau=field.tau,
                                C_decay=field.C_decay, name="flattened",
                                conformal_u=u_eps)

    # certificates: min R, min face H, flatness beyond 2 R_cut; probes stay
    # outside the quarter-Schwarzschild throat (r >= 0.5), where the desk
    # scenario is meaningful
    minR = np.inf
    for r in np.geomspace(0.5, domain.r_outer * 0.98, 200):
        minR = min(minR, _profile_scalar_curvature(eps_profile, float(r), n))
    # faces through the origin are totally geodesic for radial fields
    certs = {"min_R": float(minR), "min_H_faces": 0.0,
             "flat_beyond": _flatness_defect(g_eps, 2.0 * R_cut,
                                             domain.r_outer)}

    m_base = mass_mod.mass_estimate(field, mass_radii, kind=QUARTER_SPACE)
    m_eps = mass_mod.mass_estimate(g_eps, mass_radii, kind=QUARTER_SPACE)
    drift = abs(m_eps.m_infinity - m_base.m_infinity)

    return FlatteningResult(g_eps=g_eps, K_radius=2.0 * R_cut,
                            mass_drift=float(drift),
                            curvature_certificates=certs,
                            v_amplitude=float(np.abs(w).max()))


def _profile_scalar_curvature(profile: RadialProfile, r: float, n: int) -> float:
    """R of the radial conformally flat metric W(r) delta via the flat law."""
    k = 4.0 / (n - 2)
    W, dW, ddW = profile.A(r), profile.dA(r), profile.ddA(r)
    u = W ** (1.0 / k)
    du = (1.0 / k) * W ** (1.0 / k - 1.0) * dW
    ddu = ((1.0 / k) * (1.0 / k - 1.0) * W ** (1.0 / k - 2.0) * dW ** 2
           + (1.0 / k) * W ** (1.0 / k - 1.0) * ddW)
    lap = ddu + (n - 1) * du / r
    return float(-(lap / c_n(n)) * u ** (-(n + 2.0) / (n - 2.0)))


def _radial_scalar_curvature(field: MetricField, r: float) -> float:
    """R of a radial conformally flat field via the flat-background law."""
    n = field.n
    cn = c_n(n)
    prof = field.radial
    k = 4.0 / (n - 2)
    u = field.conformal_u(r)
    # flat Laplacian of u(r): u'' + (n-1) u'/r, from the profile A = u^k
    A, dA, ddA = prof.A(r), prof.dA(r), prof.ddA(r)
    du = dA / (k * u ** (k - 1))
    ddu = (ddA - k * (k - 1) * u ** (k - 2) * du * du) / (k * u ** (k - 1))
    lap = ddu + (n - 1) * du / r
    return float(-(lap / cn) * u ** (-(n + 2.0) / (n - 2.0)))


def _spline_radial_profile(u_of_r: Callable[[float], float], k: float,
                           r_max: float, m: int = 4000) -> RadialProfile:
    """Radial conformal profile A = u^k with spline derivatives."""
    from scipy.interpolate import CubicSpline

    rs = np.linspace(1e-3, r_max * 1.05, m)
    A_vals = np.array([u_of_r(float(r)) ** k for r in rs])
    sp = CubicSpline(rs, A_vals)
    return RadialProfile(
        A=lambda r: float(sp(r)), B=lambda r: float(sp(r)),
        dA=lambda r: float(sp(r, 1)), dB=lambda r: float(sp(r, 1)),
        ddA=lambda r: float(sp(r, 2)), ddB=lambda r: float(sp(r, 2)))


def _flatness_defect(field: MetricField, r_from: float, r_to: float) -> float:
    """Max deviation of g from (scalar) * identity at probe points beyond
    r_from: zero for conformally flat evaluators."""
    worst = 0.0
    for r in np.linspace(r_from * 1.01, r_to * 0.99, 12):
        x = np.array([0.6, 0.64, 0.48]) * r
        g = field.eval(x)
        scal = g[0, 0]
        worst = max(worst, float(np.abs(g - scal * np.eye(field.n)).max()))
    return worst
