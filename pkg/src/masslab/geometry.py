"""Pointwise differential geometry by exact evaluators or finite differences.

All operations accept an optional two-piece side flag for one-sided limits at
the interface sphere, and an optional domain to trigger one-sided stencils
within 2h of a boundary face.  Derivatives default to order-2 central
differences; exact coefficient derivatives are used whenever the field
provides them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domains import Domain
from .metrics import MetricField, MetricError

OUTWARD_UNBOUNDED = "outward_unbounded"
OUTWARD_DOMAIN = "outward_domain"


# -- finite-difference stencils ---------------------------------------------

def _face_one_sided_axes(x: np.ndarray, h: float, domain: Optional[Domain]):
    """Axes where the central stencil would cross a domain face."""
    if domain is None:
        return ()
    return tuple(a for a in domain.face_axes if x[a] < 2.0 * h)


def _d1(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float,
        axis: int, one_sided: bool) -> np.ndarray:
    e = np.zeros_like(x)
    e[axis] = h
    if not one_sided:
        return (f(x + e) - f(x - e)) / (2.0 * h)
    # second-order forward stencil
    return (-3.0 * f(x) + 4.0 * f(x + e) - f(x + 2.0 * e)) / (2.0 * h)


def _d2(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float,
        axis: int, one_sided: bool) -> np.ndarray:
    e = np.zeros_like(x)
    e[axis] = h
    if not one_sided:
        return (f(x + e) - 2.0 * f(x) + f(x - e)) / (h * h)
    return (2.0 * f(x) - 5.0 * f(x + e) + 4.0 * f(x + 2.0 * e)
            - f(x + 3.0 * e)) / (h * h)


def _d1d1(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float,
          ax1: int, ax2: int, os1: bool, os2: bool) -> np.ndarray:
    def inner(y: np.ndarray) -> np.ndarray:
        return _d1(f, y, h, ax2, os2)

    return _d1(inner, x, h, ax1, os1)


def metric_derivatives(field: MetricField, x: np.ndarray, h: float,
                       side: Optional[str] = None,
                       domain: Optional[Domain] = None):
    """(g, dg) with dg[a,b,c] = d_c g_ab, exact when available."""
    x = np.asarray(x, dtype=float)
    g = field.eval(x, side=side)
    exact = field.d_eval(x, side=side)
    if exact is not None:
        return g, exact
    n = field.n
    os_axes = _face_one_sided_axes(x, h, domain)
    f = lambda y: field.eval(y, side=side)
    dg = np.empty((n, n, n))
    for c in range(n):
        dg[:, :, c] = _d1(f, x, h, c, c in os_axes)
    return g, dg


def metric_second_derivatives(field: MetricField, x: np.ndarray, h: float,
                              side: Optional[str] = None,
                              domain: Optional[Domain] = None):
    """(g, dg, ddg) with ddg[a,b,c,d] = d_c d_d g_ab."""
    x = np.asarray(x, dtype=float)
    g, dg = metric_derivatives(field, x, h, side=side, domain=domain)
    exact = field.dd_eval(x, side=side)
    if exact is not None:
        return g, dg, exact
    n = field.n
    os_axes = _face_one_sided_axes(x, h, domain)
    f = lambda y: field.eval(y, side=side)
    ddg = np.empty((n, n, n, n))
    for c in range(n):
        ddg[:, :, c, c] = _d2(f, x, h, c, c in os_axes)
        for d in range(c + 1, n):
            mixed = _d1d1(f, x, h, c, d, c in os_axes, d in os_axes)
            ddg[:, :, c, d] = mixed
            ddg[:, :, d, c] = mixed
    return g, dg, ddg


# -- Christoffel symbols and curvature ---------------------------------------

def christoffel(field: MetricField, x: np.ndarray, h: float,
                side: Optional[str] = None,
                domain: Optional[Domain] = None) -> np.ndarray:
    """Gamma[a,b,c] = Gamma^a_{bc} = 1/2 g^{ad}(g_{db,c} + g_{dc,b} - g_{bc,d})."""
    g, dg = metric_derivatives(field, x, h, side=side, domain=domain)
    ginv = np.linalg.inv(g)
    # dg[d,b,c] = d_c g_db
    bracket = (np.einsum("dbc->dbc", dg) + np.einsum("dcb->dbc", dg)
               - np.einsum("bcd->dbc", dg))
    return 0.5 * np.einsum("ad,dbc->abc", ginv, bracket)


def christoffel_with_derivatives(field: MetricField, x: np.ndarray, h: float,
                                 side: Optional[str] = None,
                                 domain: Optional[Domain] = None):
    """(Gamma, dGamma) with dGamma[a,b,c,d] = d_d Gamma^a_{bc}."""
    x = np.asarray(x, dtype=float)
    n = field.n
    if field.has_exact_derivatives:
        g, dg, ddg = metric_second_derivatives(field, x, h, side=side)
        ginv = np.linalg.inv(g)
        bracket = dg + np.einsum("dcb->dbc", dg) - np.einsum("bcd->dbc", dg)
        gamma = 0.5 * np.einsum("ad,dbc->abc", ginv, bracket)
        # d_d g^{ae} = -g^{af} g_{fg,d} g^{ge}
        dginv = -np.einsum("af,fgd,ge->aed", ginv, dg, ginv)
        # ddg[e,b,c,d] = d_c d_d g_eb; bracket derivative in d
        dbracket = (np.einsum("ebcd->ebcd", ddg)
                    + np.einsum("ecbd->ebcd", ddg)
                    - np.einsum("bced->ebcd", ddg))
        dgamma = 0.5 * (np.einsum("aed,ebc->abcd", dginv, bracket)
                        + np.einsum("ae,ebcd->abcd", ginv, dbracket))
        return gamma, dgamma
    os_axes = _face_one_sided_axes(x, h, domain)
    gamma = christoffel(field, x, h, side=side, domain=domain)
    f = lambda y: christoffel(field, y, h, side=side, domain=domain)
    dgamma = np.empty((n, n, n, n))
    for d in range(n):
        dgamma[:, :, :, d] = _d1(f, x, h, d, d in os_axes)
    return gamma, dgamma


def ricci_tensor(field: MetricField, x: np.ndarray, h: float,
                 side: Optional[str] = None,
                 domain: Optional[Domain] = None) -> np.ndarray:
    gamma, dgamma = christoffel_with_derivatives(field, x, h, side=side,
                                                 domain=domain)
    # R_bd = d_a Gamma^a_{bd} - d_d Gamma^a_{ab}
    #        + Gamma^a_{ae} Gamma^e_{bd} - Gamma^a_{de} Gamma^e_{ab}
    term1 = np.einsum("abda->bd", dgamma)
    term2 = np.einsum("aabd->bd", dgamma)
    term3 = np.einsum("aae,ebd->bd", gamma, gamma)
    term4 = np.einsum("ade,eab->bd", gamma, gamma)
    return term1 - term2 + term3 - term4


def scalar_curvature(field: MetricField, x: np.ndarray, h: float,
                     side: Optional[str] = None,
                     domain: Optional[Domain] = None) -> float:
    g = field.eval(np.asarray(x, dtype=float), side=side)
    ric = ricci_tensor(field, x, h, side=side, domain=domain)
    return float(np.einsum("bd,bd->", np.linalg.inv(g), ric))


# -- hypersurface charts ------------------------------------------------------

@dataclass(frozen=True)
class HypersurfaceChart:
    """A level-set chart phi = const with exact phi-derivatives.

    kind is one of 'interface_sphere', 'boundary_face_x1', 'boundary_face_xn';
    the orientation fixes the sign of the unit normal.
    """

    kind: str
    normal_orientation: str
    phi: Callable[[np.ndarray], float]
    grad_phi: Callable[[np.ndarray], np.ndarray]
    hess_phi: Callable[[np.ndarray], np.ndarray]
    level: float
    axis: Optional[int] = None
    radius: Optional[float] = None

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return abs(self.phi(np.asarray(x, dtype=float)) - self.level) < tol

    def normal_sign(self) -> float:
        """+1 when nu is the normalized metric gradient of phi, else -1."""
        if self.kind == "interface_sphere":
            return +1.0 if self.normal_orientation == OUTWARD_UNBOUNDED else -1.0
        # boundary faces: outward of the domain {x_axis >= 0} points along -e_axis
        return -1.0 if self.normal_orientation == OUTWARD_DOMAIN else +1.0


def sphere_chart(radius: float, n: int = 3,
                 orientation: str = OUTWARD_UNBOUNDED) -> HypersurfaceChart:
    radius = float(radius)

    def phi(x: np.ndarray) -> float:
        return float(np.linalg.norm(x))

    def grad(x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x)
        return np.asarray(x, dtype=float) / r

    def hess(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        xh = x / r
        return (np.eye(len(x)) - np.outer(xh, xh)) / r

    return HypersurfaceChart("interface_sphere", orientation, phi, grad, hess,
                             level=radius, radius=radius)


def face_chart(axis: int, n: int = 3,
               orientation: str = OUTWARD_DOMAIN) -> HypersurfaceChart:
    kind = "boundary_face_x1" if axis == 0 else "boundary_face_xn"
    e = np.zeros(n)
    e[axis] = 1.0
    zero = np.zeros((n, n))

    return HypersurfaceChart(kind, orientation,
                             phi=lambda x: float(x[axis]),
                             grad_phi=lambda x: e.copy(),
                             hess_phi=lambda x: zero.copy(),
                             level=0.0, axis=axis)


def tangent_basis(direction: np.ndarray) -> np.ndarray:
    """Deterministic Euclidean-orthonormal basis of the complement of `direction`.

    Returns an (n-1, n) array of row vectors, built from the Householder
    reflection taking e_1 to the unit direction.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    n = len(d)
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = d - e1 if d[0] < 0.99 else d + e1
    v = v / np.linalg.norm(v)
    house = np.eye(n) - 2.0 * np.outer(v, v)
    # first column of house maps to +-d; the remaining columns span the complement
    return house[:, 1:].T


def unit_normal(field: MetricField, surf: HypersurfaceChart, x: np.ndarray,
                side: Optional[str] = None) -> np.ndarray:
    """The g-unit normal with the chart's orientation."""
    x = np.asarray(x, dtype=float)
    g = field.eval(x, side=side)
    ginv = np.linalg.inv(g)
    dphi = surf.grad_phi(x)
    up = ginv @ dphi
    norm = np.sqrt(dphi @ up)
    return surf.normal_sign() * up / norm


def second_fundamental_form(field: MetricField, surf: HypersurfaceChart,
                            x: np.ndarray, h: float,
                            side: Optional[str] = None,
                            domain: Optional[Domain] = None):
    """(A, gamma, basis): the second fundamental form and induced metric of the
    level set through x, in a deterministic Euclidean-orthonormal tangent basis.

    A(X, Y) = -g(nabla_X Y, nu) = sgn * Hess_g phi(X, Y)/|grad_g phi|_g for the
    level-set normal; Euclidean sphere with outward normal gives A = gamma/rho.
    """
    x = np.asarray(x, dtype=float)
    g = field.eval(x, side=side)
    gamma_full = christoffel(field, x, h, side=side, domain=domain)
    dphi = surf.grad_phi(x)
    hphi = surf.hess_phi(x)
    # covariant Hessian of phi
    hess_cov = hphi - np.einsum("cab,c->ab", gamma_full, dphi)
    ginv = np.linalg.inv(g)
    norm = np.sqrt(dphi @ ginv @ dphi)
    basis = tangent_basis(dphi)
    A = surf.normal_sign() * np.einsum("ia,jb,ab->ij", basis, basis, hess_cov) / norm
    induced = np.einsum("ia,jb,ab->ij", basis, basis, g)
    return A, induced, basis


def mean_curvature(field: MetricField, surf: HypersurfaceChart, x: np.ndarray,
                   h: float, side: Optional[str] = None,
                   domain: Optional[Domain] = None,
                   method: str = "trace") -> float:
    """H = gamma^{ij} A_ij (trace convention, no 1/(n-1) averaging).

    method='divergence' recomputes H = div_g nu by finite differences of the
    extended unit-normal field; the two paths agree to discretization error
    and serve as mutual oracles.
    """
    x = np.asarray(x, dtype=float)
    if method == "trace":
        A, induced, _ = second_fundamental_form(field, surf, x, h, side=side,
                                                domain=domain)
        return float(np.einsum("ij,ij->", np.linalg.inv(induced), A))
    if method != "divergence":
        raise ValueError(f"unknown method {method!r}")

    def nu_density(y: np.ndarray) -> np.ndarray:
        gy = field.eval(y, side=side)
        return np.sqrt(np.linalg.det(gy)) * unit_normal(field, surf, y, side=side)

    g = field.eval(x, side=side)
    sqrtg = np.sqrt(np.linalg.det(g))
    os_axes = _face_one_sided_axes(x, h, domain)
    div = 0.0
    for a in range(field.n):
        div += _d1(nu_density, x, h, a, a in os_axes)[a]
    return float(div / sqrtg)


def surface_scalar_curvature(field: MetricField, surf: HypersurfaceChart,
                             x: np.ndarray, h: float,
                             side: Optional[str] = None) -> float:
    """Intrinsic scalar curvature of the level surface through x.

    Radial fields on coordinate spheres use the closed form
    (n-1)(n-2)/(B(rho) rho^2); otherwise (n = 3 only) the Gauss curvature is
    computed with the Brioschi formula in a local geodesic-polar chart of the
    surface, differentiated by second-order differences.
    """
    x = np.asarray(x, dtype=float)
    n = field.n
    piece = field.resolve_piece(x, side)
    if surf.kind == "interface_sphere" and piece.radial is not None:
        rho = float(np.linalg.norm(x))
        Bval = piece.radial.B(rho)
        return (n - 1) * (n - 2) / (Bval * rho * rho)
    if n != 3:
        raise NotImplementedError("generic intrinsic curvature implemented for n=3")

    if surf.kind == "interface_sphere":
        rho = surf.radius
        xh = x / np.linalg.norm(x)
        T = tangent_basis(xh)

        def chart(al: float, be: float) -> np.ndarray:
            s = np.hypot(al, be)
            if s == 0.0:
                return rho * xh
            direction = (al * T[0] + be * T[1]) / s
            return rho * (np.cos(s) * xh + np.sin(s) * direction)

        step = h / max(1.0, rho)
    else:
        T = tangent_basis(surf.grad_phi(x))

        def chart(al: float, be: float) -> np.ndarray:
            return x + al * T[0] + be * T[1]

        step = h

    def efg(al: float, be: float) -> np.ndarray:
        ya = (chart(al + step, be) - chart(al - step, be)) / (2.0 * step)
        yb = (chart(al, be + step) - chart(al, be - step)) / (2.0 * step)
        gy = field.eval(chart(al, be), side=side)
        return np.array([ya @ gy @ ya, ya @ gy @ yb, yb @ gy @ yb])

    # 3x3 grid of (E, F, G) for second differences at the center
    vals = {(i, j): efg(i * step, j * step) for i in (-1, 0, 1) for j in (-1, 0, 1)}
    E, F, G = vals[(0, 0)]
    d_a = (vals[(1, 0)] - vals[(-1, 0)]) / (2.0 * step)
    d_b = (vals[(0, 1)] - vals[(0, -1)]) / (2.0 * step)
    d_aa = (vals[(1, 0)] - 2.0 * vals[(0, 0)] + vals[(-1, 0)]) / step ** 2
    d_bb = (vals[(0, 1)] - 2.0 * vals[(0, 0)] + vals[(0, -1)]) / step ** 2
    d_ab = (vals[(1, 1)] - vals[(1, -1)] - vals[(-1, 1)] + vals[(-1, -1)]) \
        / (4.0 * step ** 2)
    Ea, Eb = d_a[0], d_b[0]
    Fa, Fb = d_a[1], d_b[1]
    Ga, Gb = d_a[2], d_b[2]
    Ebb, Gaa = d_bb[0], d_aa[2]
    Fab = d_ab[1]
    M1 = np.array([
        [-0.5 * Ebb + Fab - 0.5 * Gaa, 0.5 * Ea, Fa - 0.5 * Eb],
        [Fb - 0.5 * Ga, E, F],
        [0.5 * Gb, F, G],
    ])
    M2 = np.array([
        [0.0, 0.5 * Eb, 0.5 * Ga],
        [0.5 * Eb, E, F],
        [0.5 * Ga, F, G],
    ])
    K = (np.linalg.det(M1) - np.linalg.det(M2)) / (E * G - F * F) ** 2
    return float(2.0 * K)


# -- curvature samples and the Gauss decomposition ---------------------------

@dataclass(frozen=True)
class CurvatureSample:
    x: np.ndarray
    christoffel: np.ndarray
    scalar: float
    second_ff: np.ndarray
    mean: float
    mean_divergence: float


def curvature_sample(field: MetricField, surf: HypersurfaceChart,
                     x: np.ndarray, h: float,
                     side: Optional[str] = None,
                     domain: Optional[Domain] = None) -> CurvatureSample:
    gamma = christoffel(field, x, h, side=side, domain=domain)
    R = scalar_curvature(field, x, h, side=side, domain=domain)
    A, induced, _ = second_fundamental_form(field, surf, x, h, side=side,
                                            domain=domain)
    H = float(np.einsum("ij,ij->", np.linalg.inv(induced), A))
    Hdiv = mean_curvature(field, surf, x, h, side=side, domain=domain,
                          method="divergence")
    return CurvatureSample(np.asarray(x, dtype=float), gamma, R, A, H, Hdiv)


@dataclass(frozen=True)
class GaussDecomposition:
    R: float
    R_sigma: float
    A_norm_sq: float
    H: float
    dH_dnu: float
    residual: float


def gauss_scalar_decomposition(field: MetricField, collar, x_sigma: np.ndarray,
                               t: float, h: float,
                               side: Optional[str] = None) -> GaussDecomposition:
    """Each term of R = R^Sigma - (|A|^2 + H^2) - 2 dH/dnu, computed
    independently, plus the defect of the identity.

    `collar` provides to_ambient(x, t) and level_chart(t) and must be a
    unit-speed orthogonal (Gaussian) collar for the identity to hold exactly;
    radial collars over radial fields are.  One-sided evaluation at t = 0 uses
    one-sided differences in t on the requested side.
    """
    z = collar.to_ambient(x_sigma, t)
    surf = collar.level_chart(t)
    R = scalar_curvature(field, z, h, side=side)
    A, induced, _ = second_fundamental_form(field, surf, z, h, side=side)
    inv = np.linalg.inv(induced)
    A_norm_sq = float(np.einsum("ik,jl,ij,kl->", inv, inv, A, A))
    H = float(np.einsum("ij,ij->", inv, A))
    R_sigma = surface_scalar_curvature(field, surf, z, h, side=side)

    def H_at(tt: float) -> float:
        zz = collar.to_ambient(x_sigma, tt)
        ss = collar.level_chart(tt)
        return mean_curvature(field, ss, zz, h, side=side)

    dt = h
    if side is None or abs(t) > 2.0 * dt:
        dH = (H_at(t + dt) - H_at(t - dt)) / (2.0 * dt)
    else:
        s = +1.0 if side == "plus" else -1.0
        dH = s * (-3.0 * H_at(t) + 4.0 * H_at(t + s * dt)
                  - H_at(t + 2.0 * s * dt)) / (2.0 * dt)
    residual = R - (R_sigma - (A_norm_sq + H * H) - 2.0 * dH)
    return GaussDecomposition(R, R_sigma, A_norm_sq, H, dH, residual)


# -- asymptotic decay fit -----------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    tau_hat: float
    C_hat: float
    radii: tuple
    profile: tuple
    violates_declared: bool


def _directions(n: int, count: int = 8) -> np.ndarray:
    """Deterministic direction samples in the open half-space x_1 > 0."""
    if n != 3:
        rng = np.random.default_rng(20240601)
        d = rng.standard_normal((count, n))
        d[:, 0] = np.abs(d[:, 0]) + 0.2
        return d / np.linalg.norm(d, axis=1, keepdims=True)
    thetas = np.linspace(0.2, np.pi / 2 - 0.1, max(2, count // 2))
    phis = np.linspace(0.0, np.pi, 2)
    out = []
    for th in thetas:
        for ph in phis:
            out.append([np.cos(th), np.sin(th) * np.cos(ph),
                        np.sin(th) * np.sin(ph)])
    return np.asarray(out)


def decay_profile(field: MetricField, radii, h: Optional[float] = None,
                  directions: Optional[np.ndarray] = None) -> DecayFit:
    """Least-squares fit of the decay order tau from
    max over directions of |g - delta| + |x||dg| + |x|^2 |ddg|.

    Flat profiles (all samples below 1e-14) report tau_hat = +inf.
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii for a decay fit")
    n = field.n
    dirs = _directions(n) if directions is None else np.atleast_2d(directions)
    eye = np.eye(n)
    prof = []
    for rho in radii:
        step = h if h is not None else max(1e-3, 1e-3 * rho)
        worst = 0.0
        for d in dirs:
            x = rho * d
            g, dg, ddg = metric_second_derivatives(field, x, step)
            val = (np.abs(g - eye).sum() + rho * np.abs(dg).sum()
                   + rho * rho * np.abs(ddg).sum())
            worst = max(worst, float(val))
        prof.append(worst)
    prof_arr = np.asarray(prof)
    if np.all(prof_arr < 1e-14):
        return DecayFit(float("inf"), 0.0, tuple(radii), tuple(prof),
                        violates_declared=False)
    mask = prof_arr > 1e-300
    logs = np.log(prof_arr[mask])
    logr = np.log(np.asarray(radii)[mask])
    slope, intercept = np.polyfit(logr, logs, 1)
    tau_hat = -float(slope)
    C_hat = float(np.exp(intercept))
    violates = (np.isfinite(field.tau)
                and tau_hat < field.tau - 0.2)
    return DecayFit(tau_hat, C_hat, tuple(radii), tuple(prof), violates)
