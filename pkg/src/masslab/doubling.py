"""Reflection doubling of quarter-space configurations across {x_n = 0}.

The doubled manifold is represented by its evaluator alone: for z_n < 0 the
metric is the reflection pushforward R g(R z) R with R = diag(1, .., 1, -1),
so one-sided limits on the interface agree exactly and quadrature nodes can
be mirrored in exact pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import geometry, quadrature as quadr
from .domains import Domain, QUARTER_SPACE, half_space
from .mass import MassSample, corner_mass_at_radius, flux_integrand, \
    _boundary_integrand
from .metrics import MetricField


class DoublingError(Exception):
    pass


def _reflector(n: int) -> np.ndarray:
    R = np.eye(n)
    R[n - 1, n - 1] = -1.0
    return R


class DoubledMetricField(MetricField):
    """Half-space evaluator of the reflection-doubled quarter metric."""

    def __init__(self, base: MetricField):
        super().__init__(base.n, g=None, mode="doubled", tau=base.tau,
                         C_decay=base.C_decay, name=f"doubled({base.name})")
        self.base = base
        self._R = _reflector(base.n)
        self._signs = np.diag(self._R)
        self.interface_radius = base.interface_radius

    def _mirror(self, x: np.ndarray) -> np.ndarray:
        z = np.array(x, dtype=float)
        z[self.n - 1] = -z[self.n - 1]
        return z

    def eval(self, x: np.ndarray, side=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x[self.n - 1] >= 0.0:
            return self.base.eval(x, side=side)
        g = self.base.eval(self._mirror(x), side=side)
        return self._R @ g @ self._R

    def d_eval(self, x: np.ndarray, side=None):
        x = np.asarray(x, dtype=float)
        if x[self.n - 1] >= 0.0:
            return self.base.d_eval(x, side=side)
        dg = self.base.d_eval(self._mirror(x), side=side)
        if dg is None:
            return None
        s = self._signs
        return dg * s[:, None, None] * s[None, :, None] * s[None, None, :]

    def dd_eval(self, x: np.ndarray, side=None):
        x = np.asarray(x, dtype=float)
        if x[self.n - 1] >= 0.0:
            return self.base.dd_eval(x, side=side)
        dd = self.base.dd_eval(self._mirror(x), side=side)
        if dd is None:
            return None
        s = self._signs
        return (dd * s[:, None, None, None] * s[None, :, None, None]
                * s[None, None, :, None] * s[None, None, None, :])

    def resolve_piece(self, x, side):
        return self.base.resolve_piece(np.asarray(x, dtype=float), side)

    @property
    def radial(self):
        return self.base.radial

    @radial.setter
    def radial(self, value):
        # base class assigns None during construction; the doubled field
        # always defers to its base
        pass


@dataclass
class DoubledConfig:
    base: MetricField
    doubled: DoubledMetricField
    K_radius: float
    domain: Domain

    def paired_nodes(self, rho: float,
                     spec: Optional[quadr.QuadratureSpec] = None):
        spec = spec or quadr.QuadratureSpec()
        return quadr.mirrored_sphere_rule(rho, spec, axis=self.base.n - 1,
                                          n=self.base.n)


def double_manifold(field: MetricField, domain: Domain,
                    K_radius: float = 0.0,
                    geodesic_tol: float = 1e-8) -> DoubledConfig:
    """Double a quarter-space field across {x_n = 0}.

    Beyond K_radius the face must be totally geodesic (the flattened
    scenarios are, by conformal flatness); otherwise the doubled metric would
    only be Lipschitz there and the construction is rejected.
    """
    if domain.kind != QUARTER_SPACE:
        raise DoublingError("double_manifold expects a quarter-space field")
    n = field.n
    face = geometry.face_chart(n - 1, n)
    probe_r = max(1.5 * K_radius, 0.5 * (K_radius + domain.r_outer), 3.0)
    for ang in (0.0, 0.4, 1.1):
        x = np.array([probe_r * np.cos(ang), probe_r * np.sin(ang), 0.0])[:n]
        A, _, _ = geometry.second_fundamental_form(field, face, x, domain.h)
        if np.abs(A).max() > geodesic_tol:
            raise DoublingError(
                f"face x_n = 0 is not totally geodesic at |x| = {probe_r:.2f} "
                f"(|A| = {np.abs(A).max():.2e}); flatten the field first")
    return DoubledConfig(base=field, doubled=DoubledMetricField(field),
                         K_radius=float(K_radius), domain=domain)


# -- interface regularity ------------------------------------------------------

@dataclass(frozen=True)
class InterfaceReport:
    max_gan_defect: float
    max_gijn_defect: float
    tolerance: float
    passed: bool


def _fermi_chart_defect(field: MetricField, x0: np.ndarray, h: float,
                        s_max: float = 0.4, nsteps: int = 32) -> float:
    """Max |g(dF/dxbar_i, dF/ds)| and |g(dF/ds,dF/ds) - 1| along the normal
    geodesic of the face {x_n = 0} from x0 (the Fermi criteria g_an = d_an)."""
    n = field.n

    def geodesic(start: np.ndarray, v0: np.ndarray, s_end: float):
        y = np.concatenate([start, v0])
        m = nsteps
        ds = s_end / m
        out = [y.copy()]

        def rhs(state):
            pos, vel = state[:n], state[n:]
            gam = geometry.christoffel(field, pos, h)
            acc = -np.einsum("abc,b,c->a", gam, vel, vel)
            return np.concatenate([vel, acc])

        for _ in range(m):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * ds * k1)
            k3 = rhs(y + 0.5 * ds * k2)
            k4 = rhs(y + ds * k3)
            y = y + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            out.append(y.copy())
        return np.asarray(out)

    def unit_normal_at(base: np.ndarray) -> np.ndarray:
        g = field.eval(base)
        en = np.zeros(n)
        en[n - 1] = 1.0
        return en / np.sqrt(en @ g @ en)

    eps = 4.0 * h
    center = geodesic(x0, unit_normal_at(x0), s_max)
    sides = []
    for i in range(n - 1):
        e = np.zeros(n)
        e[i] = eps
        sides.append((geodesic(x0 + e, unit_normal_at(x0 + e), s_max),
                      geodesic(x0 - e, unit_normal_at(x0 - e), s_max)))
    worst = 0.0
    for idx in (nsteps // 2, nsteps):
        pos = center[idx, :n]
        vel = center[idx, n:]
        g = field.eval(pos)
        worst = max(worst, abs(float(vel @ g @ vel) - 1.0))
        for plus, minus in sides:
            tangent = (plus[idx, :n] - minus[idx, :n]) / (2.0 * eps)
            worst = max(worst, abs(float(tangent @ g @ vel)))
    return worst


def check_c2_across_interface(config: DoubledConfig,
                              probes: Sequence[np.ndarray],
                              h: float, tol: float = 1e-6) -> InterfaceReport:
    """Fermi-coordinate C^2 criteria at face probes outside K:
    g_an = delta_an along the normal geodesics (chart consistency) and
    g_ij,n = 0 on the face (equivalently the face is totally geodesic,
    |g_ij,n| = 2 |A_ij|)."""
    n = config.base.n
    face = geometry.face_chart(n - 1, n)
    worst_gan = 0.0
    worst_gijn = 0.0
    for p in probes:
        p = np.asarray(p, dtype=float)
        if np.linalg.norm(p) <= config.K_radius:
            raise DoublingError(f"probe {p} lies inside K")
        A, _, _ = geometry.second_fundamental_form(config.base, face, p, h)
        worst_gijn = max(worst_gijn, 2.0 * float(np.abs(A).max()))
        worst_gan = max(worst_gan, _fermi_chart_defect(config.base, p, h))
    return InterfaceReport(worst_gan, worst_gijn, tol,
                           passed=bool(max(worst_gan, worst_gijn) < tol))


# -- mass relation ----------------------------------------------------------------

@dataclass(frozen=True)
class MassRelation:
    radii: tuple
    m_corner: tuple
    m_doubled: tuple
    ratios: tuple
    max_ratio_defect: float


def doubled_mass_relation(config: DoubledConfig, radii: Sequence[float],
                          spec: Optional[quadr.QuadratureSpec] = None,
                          h: float = 1.0 / 16.0,
                          face_term_tol: float = 1e-9) -> MassRelation:
    """m_half(doubled) versus 2 m_corner(base) on exactly mirrored quadrature
    nodes; with the face terms vanishing (conformally flat outside K) the
    ratio is 2 up to floating-point association."""
    n = config.base.n
    spec = spec or quadr.QuadratureSpec(n_theta=32, n_phi=64)
    m_c, m_d, ratios = [], [], []
    for rho in radii:
        # corner mass of the base on the quarter rule
        sample = corner_mass_at_radius(config.base, rho, spec, h)
        if max(abs(b) for b in sample.boundary_terms) > face_term_tol:
            raise DoublingError(
                f"corner face terms {sample.boundary_terms} nonzero at rho = "
                f"{rho}; the doubling relation needs a conformally flat tail")
        # doubled mass on the mirrored rule (quarter nodes + exact images)
        pts, w, n_q = config.paired_nodes(rho, spec)
        vals = np.array([flux_integrand(config.doubled, p, h) for p in pts])
        flux_d = quadr.fixed_order_sum(vals, w)
        cpts, cw = quadr.boundary_circle_rule(rho, 0, spec, quadr.HALF, n)
        bvals = np.array([_boundary_integrand(config.doubled, p, 0)
                          for p in cpts])
        b_d = quadr.fixed_order_sum(bvals, cw)
        total_d = flux_d + b_d
        m_c.append(sample.total)
        m_d.append(total_d)
        ratios.append(total_d / sample.total if sample.total != 0.0 else 2.0)
    defect = max(abs(r - 2.0) for r in ratios)
    return MassRelation(tuple(radii), tuple(m_c), tuple(m_d), tuple(ratios),
                        float(defect))


def extend_interface(field: MetricField, r0: float, K_radius: float,
                     n: Optional[int] = None,
                     tol: float = 1e-8) -> geometry.HypersurfaceChart:
    """The coordinate hemisphere of radius r0 in the doubled half space,
    meeting the boundary orthogonally; r0 must clear the compact set K."""
    n = n if n is not None else field.n
    if r0 <= K_radius:
        raise DoublingError(f"interface radius {r0} must exceed K = {K_radius}")
    chart = geometry.sphere_chart(r0, n)
    face = geometry.face_chart(0, n)
    for ang in (0.0, 0.7, 1.4):
        x = np.array([0.0, r0 * np.cos(ang), r0 * np.sin(ang)])[:n]
        nu = geometry.unit_normal(field, chart, x)
        eta = geometry.unit_normal(field, face, x)
        g = field.eval(x)
        defect = abs(float(nu @ g @ eta))
        if defect > tol:
            raise DoublingError(f"interface not orthogonal to the boundary "
                                f"(defect {defect:.2e} at {x})")
    return chart
