"""Mass surface integrals at finite radii and their rho -> infinity limits.

The half-space mass is the flux integral of (g_ab,b - g_bb,a) x_a/|x| over
the coordinate hemisphere plus a boundary term on {x_1 = 0}; the corner mass
adds one boundary term per quarter-space face.  Both are evaluated with
Euclidean area elements and carry no normalizing prefactor.

Boundary-term index convention: on {x_1 = 0} the summand is g_{1i} x_i/|x|
over i >= 2, i.e. the corner-mass convention specialized to one face (the
half-space display in the source material inherits an {x_n = 0} convention
that does not match its own chart; see the project notes).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import quadrature as quad
from .domains import Domain, HALF_SPACE, QUARTER_SPACE
from .geometry import metric_derivatives
from .metrics import MetricField

POWER_LAW = "power_law"
RICHARDSON = "richardson"


@dataclass(frozen=True)
class MassSample:
    rho: float
    flux_term: float
    boundary_terms: tuple
    total: float


@dataclass(frozen=True)
class MassEstimate:
    samples: tuple
    m_infinity: float
    fit_exponent: float
    fit_residual: float

    @property
    def radii(self) -> tuple:
        return tuple(s.rho for s in self.samples)


def flux_integrand(field: MetricField, x: np.ndarray, h: float,
                   side: Optional[str] = None) -> float:
    """Sum_{a,b} (g_ab,b - g_bb,a) x_a/|x| at a single point."""
    _, dg = metric_derivatives(field, x, h, side=side)
    xh = x / np.linalg.norm(x)
    val = np.einsum("abb,a->", dg, xh) - np.einsum("bba,a->", dg, xh)
    return float(val)


def _boundary_integrand(field: MetricField, x: np.ndarray, face_axis: int,
                        side: Optional[str] = None) -> float:
    """Sum over tangential i of g_{axis,i} x_i/|x| on the face x_axis = 0."""
    g = field.eval(x, side=side)
    xh = x / np.linalg.norm(x)
    val = 0.0
    for i in range(field.n):
        if i == face_axis:
            continue
        val += g[face_axis, i] * xh[i]
    return float(val)


def _flux_term(field: MetricField, rho: float, spec: quad.QuadratureSpec,
               region: str, h: float, side: Optional[str]) -> float:
    pts, w = quad.sphere_rule(rho, spec, region, field.n)
    vals = np.array([flux_integrand(field, p, h, side) for p in pts])
    return quad.fixed_order_sum(vals, w)


def _boundary_term(field: MetricField, rho: float, face_axis: int,
                   spec: quad.QuadratureSpec, region: str,
                   side: Optional[str]) -> float:
    pts, w = quad.boundary_circle_rule(rho, face_axis, spec, region, field.n)
    vals = np.array([_boundary_integrand(field, p, face_axis, side) for p in pts])
    return quad.fixed_order_sum(vals, w)


def half_space_mass_at_radius(field: MetricField, rho: float,
                              spec: Optional[quad.QuadratureSpec] = None,
                              h: float = 1.0 / 16.0,
                              domain: Optional[Domain] = None,
                              side: Optional[str] = None) -> MassSample:
    """Hemisphere flux plus the {x_1 = 0} boundary term at radius rho."""
    if domain is not None:
        if domain.kind != HALF_SPACE:
            raise ValueError("half_space_mass_at_radius needs a half-space domain")
        if rho > domain.r_outer - 2.0 * h:
            raise ValueError(f"radius {rho} too close to truncation "
                             f"{domain.r_outer}")
    spec = spec or quad.QuadratureSpec.scaled(rho, h)
    flux = _flux_term(field, rho, spec, quad.HALF, h, side)
    bterm = _boundary_term(field, rho, 0, spec, quad.HALF, side)
    boundary = (bterm,)
    return MassSample(rho, flux, boundary, flux + sum(boundary))


def corner_mass_at_radius(field: MetricField, rho: float,
                          spec: Optional[quad.QuadratureSpec] = None,
                          h: float = 1.0 / 16.0,
                          domain: Optional[Domain] = None,
                          side: Optional[str] = None) -> MassSample:
    """Quarter-sphere flux plus the two face terms at radius rho."""
    if domain is not None:
        if domain.kind != QUARTER_SPACE:
            raise ValueError("corner_mass_at_radius needs a quarter-space domain")
        if rho > domain.r_outer - 2.0 * h:
            raise ValueError(f"radius {rho} too close to truncation "
                             f"{domain.r_outer}")
    spec = spec or quad.QuadratureSpec.scaled(rho, h)
    n = field.n
    flux = _flux_term(field, rho, spec, quad.QUARTER, h, side)
    b1 = _boundary_term(field, rho, 0, spec, quad.QUARTER, side)
    bn = _boundary_term(field, rho, n - 1, spec, quad.QUARTER, side)
    boundary = (b1, bn)
    return MassSample(rho, flux, boundary, flux + sum(boundary))


def _three_point_power_fit(rho: np.ndarray, y: np.ndarray):
    """Exact (m_inf, a, p) through three samples at geometric-ish radii."""
    d10, d21 = y[1] - y[0], y[2] - y[1]
    if abs(d10) < 1e-300 or abs(d21) < 1e-300:
        return float(y[-1]), 0.0, 1.0
    # solve (rho1^-p - rho0^-p)/(rho2^-p - rho1^-p) = d10/d21 by bisection
    target = d10 / d21

    def mismatch(p):
        t = (rho[1] ** -p - rho[0] ** -p) / (rho[2] ** -p - rho[1] ** -p)
        return t - target

    lo, hi = 1e-3, 12.0
    flo = mismatch(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = mismatch(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
    p = 0.5 * (lo + hi)
    a = d10 / (rho[1] ** -p - rho[0] ** -p)
    m_inf = y[0] - a * rho[0] ** -p
    return float(m_inf), float(a), float(p)


def extrapolate_mass(samples: Sequence[MassSample], model: str = POWER_LAW,
                     tau: Optional[float] = None,
                     n: Optional[int] = None) -> MassEstimate:
    """Fit total(rho) = m_inf + a rho^-p and report the limit.

    power_law leaves p free; richardson pins p = 2 tau - n + 2 from the
    declared decay order (the generic remainder order of the flux integral)
    and solves the remaining linear problem.
    """
    samples = sorted(samples, key=lambda s: s.rho)
    if len(samples) < 3:
        raise ValueError("need at least 3 samples to extrapolate")
    rho = np.array([s.rho for s in samples])
    if np.any(np.diff(rho) <= 0):
        raise ValueError("sample radii must be strictly increasing")
    y = np.array([s.total for s in samples])

    if np.allclose(y, y[0], rtol=0.0, atol=1e-300) or np.ptp(y) < 1e-15 * (1 + np.abs(y).max()):
        return MassEstimate(tuple(samples), float(y[0]), 0.0, 0.0)

    if model == RICHARDSON:
        if tau is None or n is None:
            raise ValueError("richardson extrapolation needs tau and n")
        p = 2.0 * tau - n + 2.0
        basis = np.stack([np.ones_like(rho), rho ** -p], axis=1)
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        resid = float(np.linalg.norm(basis @ coef - y))
        return MassEstimate(tuple(samples), float(coef[0]), float(p), resid)
    if model != POWER_LAW:
        raise ValueError(f"unknown extrapolation model {model!r}")

    m0, a0, p0 = _three_point_power_fit(rho[-3:], y[-3:])
    if len(samples) == 3:
        resid = float(np.max(np.abs(m0 + a0 * rho ** -p0 - y)))
        return MassEstimate(tuple(samples), m0, p0, resid)

    def residual(params):
        m_inf, a, p = params
        return m_inf + a * rho ** -p - y

    out = least_squares(residual, x0=[m0, a0, max(p0, 0.05)], method="lm",
                        xtol=1e-15, ftol=1e-15)
    m_inf, a, p = out.x
    resid = float(np.linalg.norm(out.fun))
    return MassEstimate(tuple(samples), float(m_inf), float(p), resid)


def mass_estimate(field: MetricField, radii: Sequence[float],
                  kind: str = HALF_SPACE,
                  spec: Optional[quad.QuadratureSpec] = None,
                  h: float = 1.0 / 16.0, model: str = POWER_LAW,
                  domain: Optional[Domain] = None) -> MassEstimate:
    """Mass samples over `radii` plus the extrapolated limit."""
    at_radius = half_space_mass_at_radius if kind == HALF_SPACE \
        else corner_mass_at_radius
    samples = [at_radius(field, rho, spec, h, domain) for rho in radii]
    return extrapolate_mass(samples, model=model, tau=field.tau, n=field.n)


def schwarzschild_half_mass_oracle(m: float, n: int = 3,
                                   rho: Optional[float] = None) -> float:
    """Closed-form hemisphere flux for g = u^{4/(n-2)} delta, u = 1 + m/(2 r^{n-2}).

    The integrand reduces to (4/(n-2)) (1-n) u^{4/(n-2)-1} du/dr, constant on
    the sphere, so flux(rho) = (n-1) omega_{n-1} m u(rho)^{(6-n)/(n-2)} and the
    limit is (n-1) omega_{n-1} m (= 8 pi m for n = 3).
    """
    from scipy.special import gamma as gamma_fn

    omega = 2.0 * np.pi ** (n / 2.0) / gamma_fn(n / 2.0)
    if rho is None:
        return (n - 1) * omega * m
    u = 1.0 + m / (2.0 * rho ** (n - 2))
    return (n - 1) * omega * m * u ** ((6.0 - n) / (n - 2.0))


@dataclass(frozen=True)
class MassShift:
    value: float
    bulk_term: float
    boundary_term: float
    tail_estimate: float


def conformal_mass_shift(field: MetricField, u: Callable[[np.ndarray], float],
                         grad_u: Callable[[np.ndarray], np.ndarray],
                         domain: Domain,
                         spec: Optional[quad.QuadratureSpec] = None,
                         R_minus: Optional[Callable[[np.ndarray], float]] = None,
                         H_minus: Optional[Callable[[np.ndarray], float]] = None,
                         breaks=(), h: float = 1.0 / 16.0,
                         gamma_decay: float = -1.0) -> MassShift:
    """The energy integral controlling the mass change under g -> u^{4/(n-2)} g:

        int_M [ (4(n-1)/(n-2)) |grad u|_g^2 - R^- u^2 ] dv_g
        - int_{dM} 2 H^- u^2 dsigma_g

    over the truncated domain, with a declared-decay tail estimate.  R^- and
    H^- default to zero (the solved regime); callers supply evaluators when
    the background curvature has a negative part.
    """
    n = field.n
    if np.any([u(np.array([1.0, 0.5, 0.5])) <= 0.0]):
        raise ValueError("conformal factor must be positive")
    region = quad.HALF if domain.kind == HALF_SPACE else quad.QUARTER
    spec = spec or quad.QuadratureSpec(n_theta=32, n_phi=64, n_r=64)
    coeff = 4.0 * (n - 1) / (n - 2)

    pts, w = quad.ball_rule(domain.r_outer, spec, region, breaks=breaks, n=n)
    vals = np.empty(len(pts))
    for i, p in enumerate(pts):
        g = field.eval(p)
        ginv = np.linalg.inv(g)
        du = grad_u(p)
        dens = np.sqrt(np.linalg.det(g))
        e = coeff * float(du @ ginv @ du)
        if R_minus is not None:
            e -= R_minus(p) * u(p) ** 2
        vals[i] = e * dens
    bulk = quad.fixed_order_sum(vals, w)

    boundary = 0.0
    if H_minus is not None:
        for axis in domain.face_axes:
            fpts, fw = quad.face_disc_rule(axis, domain.r_outer, spec, region,
                                           breaks=breaks, n=n)
            fvals = np.empty(len(fpts))
            for i, p in enumerate(fpts):
                g = field.eval(p)
                tangent = [a for a in range(n) if a != axis]
                gt = g[np.ix_(tangent, tangent)]
                area = np.sqrt(np.linalg.det(gt))
                fvals[i] = 2.0 * H_minus(p) * u(p) ** 2 * area
            boundary += quad.fixed_order_sum(fvals, fw)

    # tail: |grad u|^2 ~ (gamma a r^{gamma-1})^2 with a estimated at r_outer
    r_out = domain.r_outer
    probe = np.zeros(n)
    probe[0] = r_out * 0.99
    a_est = abs(u(probe) - 1.0) / max(r_out ** gamma_decay, 1e-300)
    frac = 0.5 if region == quad.HALF else 0.25
    from scipy.special import gamma as gamma_fn
    omega = 2.0 * np.pi ** (n / 2.0) / gamma_fn(n / 2.0)
    expo = 2.0 * (gamma_decay - 1.0) + n - 1.0
    tail = coeff * frac * omega * (gamma_decay * a_est) ** 2 \
        * r_out ** (expo + 1.0) / max(abs(expo + 1.0), 1e-12)

    return MassShift(bulk - boundary, bulk, boundary, abs(tail))
