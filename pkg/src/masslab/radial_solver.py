"""Radial reduction of the Robin problems for radially symmetric scenarios.

For radial coefficients on the half-space, the Robin data on {x_1 = 0}
vanishes (the plane through the origin is totally geodesic and radial fields
have no normal derivative there), so the corrections w_delta and z_delta are
radial and solve one-dimensional flux-form problems in the collar arclength
gauge.  The graded mesh resolves the mollifier's curvature spike at scale
delta^2/100.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.linalg import solve_banded

from .collar import CollarChart, MollifiedMetricField, warp_scalar_curvature
from .domains import Domain
from .elliptic import BvpSolution, SolverError, WeightedSpaceSpec, CK_GAMMA, \
    weighted_norm
from .metrics import MINUS, PLUS

C_N = lambda n: (n - 2) / (4.0 * (n - 1))


class RadialGauge:
    """Global arclength coordinate s along radial lines, anchored at r0.

    Inside the collar range the map delegates to the collar flow table so the
    two are bitwise consistent; outside it extends by cumulative Gauss
    quadrature of ds/dr = sqrt(A(r)).
    """

    def __init__(self, collar: CollarChart, r_min: float, r_max: float):
        self.collar = collar
        self.n = collar.n
        self.r0 = collar.r0
        eps2 = 2.0 * collar.epsilon
        self.s_lo_collar = -eps2
        self.s_hi_collar = +eps2
        self.r_lo_collar = float(collar.rho_of_t(-eps2))
        self.r_hi_collar = float(collar.rho_of_t(+eps2))
        if r_min >= self.r_lo_collar:
            self._below = None
        else:
            self._below = self._extend(self.r_lo_collar, r_min,
                                       self.s_lo_collar, MINUS)
        if r_max <= self.r_hi_collar:
            self._above = None
        else:
            self._above = self._extend(self.r_hi_collar, r_max,
                                       self.s_hi_collar, PLUS)
        self.s_min = float(self.s_of_r(r_min))
        self.s_max = float(self.s_of_r(r_max))

    def _speed(self, r, side) -> np.ndarray:
        prof = (self.collar._minus if side == MINUS else self.collar._plus).radial
        rr = np.atleast_1d(np.asarray(r, dtype=float))
        return np.array([prof.A(v) for v in rr]) ** 0.5

    def _extend(self, r_from: float, r_to: float, s_from: float, side):
        m = max(200, int(abs(r_to - r_from) * 400))
        rs = np.linspace(r_from, r_to, m + 1)
        gx, gw = leggauss(8)
        s_vals = [s_from]
        for a, b in zip(rs[:-1], rs[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            ds = half * float(np.dot(gw, self._speed(mid + half * gx, side)))
            s_vals.append(s_vals[-1] + ds)
        s_vals = np.asarray(s_vals)
        slopes = self._speed(rs, side)
        if rs[-1] < rs[0]:
            order = np.argsort(rs)
            spl_s = CubicHermiteSpline(rs[order], s_vals[order], slopes[order])
        else:
            spl_s = CubicHermiteSpline(rs, s_vals, slopes)
        order = np.argsort(s_vals)
        spl_r = CubicHermiteSpline(s_vals[order], np.asarray(rs)[order],
                                   1.0 / slopes[order])
        return spl_s, spl_r

    def s_of_r(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r, dtype=float)
        scalar = out.ndim == 0
        r = np.atleast_1d(r)
        out = np.atleast_1d(out)
        in_collar = (r >= self.r_lo_collar) & (r <= self.r_hi_collar)
        if in_collar.any():
            out[in_collar] = self.collar.t_of_r(r[in_collar])
        below = r < self.r_lo_collar
        if below.any():
            out[below] = self._below[0](r[below])
        above = r > self.r_hi_collar
        if above.any():
            out[above] = self._above[0](r[above])
        return float(out[0]) if scalar else out

    def r_of_s(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        in_collar = (s >= self.s_lo_collar) & (s <= self.s_hi_collar)
        if in_collar.any():
            out[in_collar] = self.collar.rho_of_t(s[in_collar])
        below = s < self.s_lo_collar
        if below.any():
            out[below] = self._below[1](s[below])
        above = s > self.s_hi_collar
        if above.any():
            out[above] = self._above[1](s[above])
        return out if out.shape != (1,) else float(out[0])

    # base-field warp data on the global gauge ---------------------------------

    def _profile(self, s: float):
        side = MINUS if s < 0 else PLUS
        return (self.collar._minus if side == MINUS else self.collar._plus).radial

    def F(self, s: float) -> float:
        r = float(self.r_of_s(s))
        prof = self._profile(s)
        return prof.B(r) * r * r

    def dF(self, s: float) -> float:
        r = float(self.r_of_s(s))
        prof = self._profile(s)
        drds = prof.A(r) ** -0.5
        return (prof.dB(r) * r * r + 2.0 * prof.B(r) * r) * drds

    def ddF(self, s: float) -> float:
        r = float(self.r_of_s(s))
        prof = self._profile(s)
        A, dA = prof.A(r), prof.dA(r)
        drds = A ** -0.5
        ddrds = -0.5 * dA / A ** 2
        return ((prof.ddB(r) * r * r + 4.0 * prof.dB(r) * r + 2.0 * prof.B(r))
                * drds ** 2
                + (prof.dB(r) * r * r + 2.0 * prof.B(r) * r) * ddrds)

    def base_scalar_curvature(self, s: float) -> float:
        return warp_scalar_curvature(self.F(s), self.dF(s), self.ddF(s), self.n)

    def center_s(self) -> float:
        """Arclength of the coordinate center r = 0, extrapolated through the
        innermost tabulated radius (exact for constant-coefficient cores)."""
        r_in = float(self.r_of_s(self.s_min))
        prof = self._profile(self.s_min)
        return self.s_min - prof.A(r_in) ** 0.5 * r_in


def _geom_nodes(a: float, b: float, first: float, growth: float,
                max_step: float) -> np.ndarray:
    """Increasing nodes from a to b, step growing geometrically from `first`."""
    out = [a]
    step = first
    while out[-1] + step < b - 1e-12:
        out.append(out[-1] + step)
        step = min(step * growth, max_step)
    out.append(b)
    return np.asarray(out)


def graded_nodes(s_min: float, s_max: float, delta: Optional[float] = None,
                 coarse: float = 0.05, growth: float = 1.08,
                 max_step: float = 0.35, refine=()) -> np.ndarray:
    """Radial mesh refined around s = 0 at the mollifier scales: spacing
    <= delta^2/400 in the spike band, ~delta/60 across the collar band,
    geometric growth outside.  `refine` lists extra (lo, hi, step) windows
    (coefficient kinks, cutoff transitions)."""
    if delta is None:
        core = np.linspace(-min(coarse, -s_min * 0.5), coarse, 21)
    else:
        a_band = delta * delta / 100.0
        wing = _geom_nodes(2.0 * a_band, delta, first=a_band,
                           growth=1.25, max_step=delta / 30.0)
        core = np.concatenate([-wing[::-1],
                               np.linspace(-2.0 * a_band, 2.0 * a_band, 65),
                               wing])
    pieces = [core]
    if s_min < core.min():
        left = -_geom_nodes(-core.min(), -s_min, first=coarse,
                            growth=growth, max_step=max_step)[::-1]
        pieces.insert(0, left)
    if s_max > core.max():
        pieces.append(_geom_nodes(core.max(), s_max, first=coarse,
                                  growth=growth, max_step=max_step))
    for lo, hi, step in refine:
        lo, hi = max(lo, s_min), min(hi, s_max)
        if hi > lo:
            pieces.append(np.linspace(lo, hi, int(np.ceil((hi - lo) / step)) + 1))
    nodes = np.unique(np.concatenate(pieces))
    nodes = nodes[(nodes >= s_min - 1e-12) & (nodes <= s_max + 1e-12)]
    keep = np.concatenate([[True], np.diff(nodes) > 1e-13])
    return nodes[keep]


def solve_radial_flux(nodes: np.ndarray, K: np.ndarray, V: np.ndarray,
                      c: np.ndarray, f: np.ndarray,
                      right_value: float,
                      left_face: Optional[float] = None,
                      K_fn: Optional[Callable[[float], float]] = None,
                      V_fn: Optional[Callable[[float], float]] = None,
                      right_robin: Optional[float] = None
                      ) -> tuple[np.ndarray, float]:
    """Solve (1/V)(K w')' - c w = f with zero flux at the left face and
    Dirichlet at the right end, on an arbitrary increasing node set.

    left_face is the position of the zero-flux face (the coordinate center,
    where the area density vanishes, so zero flux is exact for regular
    solutions); it defaults to the first node.  When K_fn/V_fn callables are
    supplied, face conductivities are evaluated exactly and cell volumes by
    Simpson quadrature, which keeps second order through the degenerate
    center cell.  Returns (w, relative residual of the tridiagonal system).
    """
    M = len(nodes)
    hgaps = np.diff(nodes)
    left = nodes[0] if left_face is None else float(left_face)
    if left > nodes[0]:
        raise ValueError("left face must sit at or below the first node")
    faces = np.concatenate([[left], 0.5 * (nodes[:-1] + nodes[1:])])

    if K_fn is not None:
        Kface = np.array([K_fn(float(s)) for s in faces[1:]])
    else:
        Kface = 0.5 * (K[:-1] + K[1:])

    widths = np.empty(M)
    widths[:-1] = faces[1:] - faces[:-1]
    widths[-1] = nodes[-1] - faces[-1]
    if V_fn is not None:
        vbar = np.empty(M)
        lo = faces
        hi = np.concatenate([faces[1:], [nodes[-1]]])
        for i in range(M):
            a, b = float(lo[i]), float(hi[i])
            vbar[i] = (V_fn(a) + 4.0 * V_fn(0.5 * (a + b)) + V_fn(b)) / 6.0
    else:
        vbar = np.asarray(V, dtype=float)

    lower = np.zeros(M)
    diag = np.zeros(M)
    upper = np.zeros(M)
    rhs = np.asarray(f, dtype=float).copy()

    for i in range(M - 1):
        wcell = widths[i]
        dens = vbar[i] * wcell
        flux_p = Kface[i] / hgaps[i]
        diag[i] += -flux_p / dens - c[i]
        upper[i] += flux_p / dens
        if i > 0:
            flux_m = Kface[i - 1] / hgaps[i - 1]
            diag[i] += -flux_m / dens
            lower[i] += flux_m / dens
    if right_robin is None:
        diag[M - 1] = 1.0
        lower[M - 1] = 0.0
        rhs[M - 1] = right_value
    else:
        # absorbing closure w' = beta w at the right end (decay bootstrap)
        diag[M - 1] = 1.0 / hgaps[-1] - right_robin
        lower[M - 1] = -1.0 / hgaps[-1]
        rhs[M - 1] = 0.0

    ab = np.zeros((3, M))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        w = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"radial solve failed: {exc}") from exc

    # residual of the tridiagonal system
    Aw = diag * w
    Aw[:-1] += upper[:-1] * w[1:]
    Aw[1:] += lower[1:] * w[:-1]
    scale = max(float(np.abs(rhs).max()), 1e-300)
    res = float(np.abs(Aw - rhs).max() / scale)
    if not np.all(np.isfinite(w)):
        raise SolverError("radial solve produced non-finite values")
    return w, res


@dataclass
class RadialSolution:
    """Radial correction profile with ambient evaluators."""

    gauge: RadialGauge
    nodes: np.ndarray
    values: np.ndarray
    spline: CubicSpline

    def w_of_s(self, s):
        return self.spline(s)

    def dw_ds(self, s):
        return self.spline(s, 1)

    def w_of_r(self, r):
        return self.spline(self.gauge.s_of_r(r))

    def dw_dr(self, r):
        scalar = np.ndim(r) == 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        s = np.atleast_1d(self.gauge.s_of_r(r))
        prof_speed = np.array(
            [self.gauge._profile(float(sv)).A(float(rv)) ** 0.5
             for sv, rv in zip(s, r)])
        out = np.atleast_1d(self.spline(s, 1)) * prof_speed
        return float(out[0]) if scalar else out

    def ambient(self, x) -> float:
        r = float(np.linalg.norm(np.asarray(x, dtype=float)))
        return float(self.spline(self.gauge.s_of_r(r)))

    def grad_ambient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        return self.dw_dr(r) * x / r


def _fit_radial_decay(nodes, w, gauge: RadialGauge, gamma: float,
                      force_gamma: Optional[float] = None):
    """Log-log regression of w ~ a r^g over the outer band of nodes; with
    force_gamma the exponent is pinned (exact harmonic tails) and only the
    amplitude is estimated."""
    r = np.asarray(gauge.r_of_s(nodes))
    r_max = r[-1]
    band = (r >= 0.5 * r_max) & (r <= 0.85 * r_max) & (np.abs(w) > 1e-300)
    if band.sum() < 6:
        return 0.0, gamma if force_gamma is None else force_gamma
    vals = w[band]
    if force_gamma is not None:
        a = float(np.mean(vals * r[band] ** (-force_gamma)))
        return a, float(force_gamma)
    sign = 1.0 if np.median(np.sign(vals)) >= 0 else -1.0
    slope, intercept = np.polyfit(np.log(r[band]), np.log(np.abs(vals)), 1)
    g_eff = float(np.clip(slope, 1.0 - gauge.n, -0.05))
    return sign * float(np.exp(intercept)), g_eff


def _two_pass_solve(nodes, K, V, c, f, gauge: RadialGauge, gamma: float,
                    K_fn=None, V_fn=None, force_gamma=None):
    """Absorbing-closure bootstrap, decay fit, then fitted-Dirichlet solve."""
    r_right = float(gauge.r_of_s(nodes[-1]))
    left_face = gauge.center_s()
    prof = gauge._profile(float(nodes[-1]))
    drds = prof.A(r_right) ** -0.5
    beta = (force_gamma if force_gamma is not None else gamma) * drds / r_right
    w, res = solve_radial_flux(nodes, K, V, c, f, right_value=0.0,
                               left_face=left_face, K_fn=K_fn, V_fn=V_fn,
                               right_robin=beta)
    a_fit, g_eff = _fit_radial_decay(nodes, w, gauge, gamma, force_gamma)
    w, res = solve_radial_flux(nodes, K, V, c, f,
                               right_value=a_fit * r_right ** g_eff,
                               left_face=left_face, K_fn=K_fn, V_fn=V_fn)
    a_fit, g_eff = _fit_radial_decay(nodes, w, gauge, gamma, force_gamma)
    return w, res, a_fit, g_eff


def solve_mollified_correction(field_delta: MollifiedMetricField,
                               domain: Domain,
                               gamma: float = -0.75,
                               r_min: float = 0.02,
                               r_max_factor: float = 16.0) -> BvpSolution:
    """w_delta solving Delta_{g_delta} w + c_n R^-_{g_delta} w = -c_n R^-,
    Neumann on the boundary plane (H^-_{g_delta} = 0 for radial scenarios),
    and fitted-decay Dirichlet at the truncation radius.

    The coefficient signs sit outside the h >= 0 regime of the isomorphism
    theorem; solvability rests on the smallness of R^- and the conditioning
    of the tridiagonal system is reported.
    """
    n = field_delta.n
    cn = C_N(n)
    warp = field_delta.warp
    collar = field_delta.collar
    delta = field_delta.delta
    # the 1D lane extends the solver domain well beyond the truncation
    # radius so the far-field closure cannot pollute the reported region
    gauge = RadialGauge(collar, r_min=r_min,
                        r_max=r_max_factor * domain.r_outer)
    nodes = graded_nodes(gauge.s_min, gauge.s_max, delta=delta)

    in_collar = np.abs(nodes) <= 2.0 * collar.epsilon - 1e-12

    def F_at(s: float) -> float:
        return float(warp.F(s)) if abs(s) <= 2.0 * collar.epsilon - 1e-12 \
            else gauge.F(s)

    Fv = np.array([F_at(float(s)) for s in nodes])
    V = Fv ** ((n - 1) / 2.0)
    K = V.copy()
    V_fn = lambda s: F_at(float(s)) ** ((n - 1) / 2.0)
    R = np.array([warp.scalar_curvature(float(s)) if ic
                  else gauge.base_scalar_curvature(float(s))
                  for s, ic in zip(nodes, in_collar)])
    R_minus = np.maximum(-R, 0.0)
    c = -cn * R_minus           # note: negative zeroth-order coefficient
    f = -cn * R_minus

    w, res, a_fit, g_eff = _two_pass_solve(nodes, K, V, c, f, gauge, gamma,
                                           K_fn=V_fn, V_fn=V_fn)
    spline = CubicSpline(nodes, w)
    sol = RadialSolution(gauge, nodes, w, spline)

    norm_spec = WeightedSpaceSpec(CK_GAMMA, k=0, gamma=gamma)
    report = {norm_spec.label(): weighted_norm(
        sol.ambient, norm_spec, domain, n_shells=12).value}

    return BvpSolution(
        w=sol.ambient, residual_interior=res, residual_boundary=(0.0,),
        weighted_norm_report=report, decay_fit=g_eff,
        sup_abs=float(np.abs(w).max()),
        meta={"radial": sol, "far_field_amplitude": a_fit,
              "R_minus_max": float(R_minus.max()),
              "R_minus_mass": float(np.trapezoid(R_minus * V, nodes)),
              "delta": delta})


def solve_strict_positivity(field_tilde, domain: Domain,
                            r_min: float = 0.02,
                            r_max_factor: float = 16.0) -> BvpSolution:
    """z_delta solving Delta_{g~} z - c_n R_{g~} z = c_n R_{g~} with the
    Robin term 2 c_n H^{dM}_{g~} (zero radially), v = 1 + z in (0, 1].

    `field_tilde` must expose the corrected-metric radial data: the base
    mollified field (.base_delta) and the conformal profile u(s), u'(s)
    (.u_of_s, .du_ds); the conformal module's corrected_metric provides it.
    """
    base: MollifiedMetricField = field_tilde.base_delta
    n = base.n
    cn = C_N(n)
    k = 4.0 / (n - 2)
    collar = base.collar
    warp = base.warp
    gauge = RadialGauge(collar, r_min=r_min,
                        r_max=r_max_factor * domain.r_outer)
    nodes = graded_nodes(gauge.s_min, gauge.s_max, delta=base.delta)
    in_collar = np.abs(nodes) <= 2.0 * collar.epsilon - 1e-12

    Fv = np.array([float(warp.F(float(s))) if ic else gauge.F(float(s))
                   for s, ic in zip(nodes, in_collar)])
    R_delta = np.array([warp.scalar_curvature(float(s)) if ic
                        else gauge.base_scalar_curvature(float(s))
                        for s, ic in zip(nodes, in_collar)])
    u_vals = np.array([float(field_tilde.u_of_s(float(s))) for s in nodes])
    if np.any(u_vals <= 0.0):
        raise SolverError("conformal factor not positive on the radial grid")
    # certified transformed curvature: R_{g~} = u^{-k} R^+_{g_delta}
    R_tilde = u_vals ** (-k) * np.maximum(R_delta, 0.0)

    V = u_vals ** (k * n / 2.0) * Fv ** ((n - 1) / 2.0)
    K = u_vals ** (k * (n / 2.0 - 1.0)) * Fv ** ((n - 1) / 2.0)
    c = cn * R_tilde
    f = cn * R_tilde

    eps2 = 2.0 * collar.epsilon - 1e-12

    def F_at2(s: float) -> float:
        return float(warp.F(s)) if abs(s) <= eps2 else gauge.F(s)

    V_fn = lambda s: (float(field_tilde.u_of_s(float(s))) ** (k * n / 2.0)
                      * F_at2(float(s)) ** ((n - 1) / 2.0))
    K_fn = lambda s: (float(field_tilde.u_of_s(float(s)))
                      ** (k * (n / 2.0 - 1.0))
                      * F_at2(float(s)) ** ((n - 1) / 2.0))
    w, res, a_fit, g_eff = _two_pass_solve(nodes, K, V, c, f, gauge,
                                           gamma=-(base.tau),
                                           K_fn=K_fn, V_fn=V_fn)
    v = 1.0 + w
    if np.any(v <= 0.0):
        raise SolverError("maximum principle violated: v <= 0 at a node "
                          "(discretization failure)")
    spline = CubicSpline(nodes, w)
    sol = RadialSolution(gauge, nodes, w, spline)
    return BvpSolution(
        w=sol.ambient, residual_interior=res, residual_boundary=(0.0,),
        weighted_norm_report={}, decay_fit=g_eff,
        sup_abs=float(np.abs(w).max()),
        meta={"radial": sol, "v_min": float(v.min()), "v_max": float(v.max()),
              "far_field_amplitude": a_fit})
