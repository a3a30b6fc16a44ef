"""Weighted norms, quarter-space image Green functions, and a discrete
Robin solver on truncated box domains.

The solver discretizes -Delta_g u + h u in divergence form (order 2) for
diagonal metrics, imposes Robin data on the coordinate faces x_1 = 0 (and
x_n = 0 on quarter domains) by ghost-node elimination, and closes the far
field with Dirichlet data fitted to the leading r^gamma decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla
from scipy.special import gamma as gamma_fn

from . import quadrature as quadr
from .domains import Domain, HALF_SPACE, QUARTER_SPACE
from .metrics import MetricField

LQ_K_GAMMA = "Lq_k_gamma"
CK_GAMMA = "Ck_gamma"
CK_ALPHA_GAMMA = "Ck_alpha_gamma"


class SolverError(Exception):
    """Linear solve failed or produced an unusable solution."""


def unit_sphere_area(n: int) -> float:
    return 2.0 * np.pi ** (n / 2.0) / gamma_fn(n / 2.0)


# -- weighted function spaces --------------------------------------------------

@dataclass(frozen=True)
class WeightedSpaceSpec:
    kind: str
    k: int = 0
    q: float = float("inf")
    gamma: float = -1.0
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in (LQ_K_GAMMA, CK_GAMMA, CK_ALPHA_GAMMA):
            raise ValueError(f"unknown weighted space kind {self.kind!r}")
        if self.k < 0:
            raise ValueError("k must be a nonnegative integer")
        if self.kind == LQ_K_GAMMA and self.q < 1.0:
            raise ValueError("q must satisfy q >= 1")
        if self.kind == CK_ALPHA_GAMMA and not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")

    def label(self) -> str:
        if self.kind == LQ_K_GAMMA:
            return f"L^{self.q}_({self.k},{self.gamma})"
        if self.kind == CK_GAMMA:
            return f"C^{self.k}_{self.gamma}"
        return f"C^({self.k},{self.alpha})_{self.gamma}"


class ScalarField:
    """A scalar evaluator with optional exact gradient/Hessian."""

    def __init__(self, f: Callable[[np.ndarray], float],
                 grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 hess: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.f = f
        self._grad = grad
        self._hess = hess

    def __call__(self, x: np.ndarray) -> float:
        return float(self.f(np.asarray(x, dtype=float)))

    def grad(self, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(x), dtype=float)
        n = len(x)
        out = np.empty(n)
        for a in range(n):
            e = np.zeros(n)
            e[a] = h
            out[a] = (self.f(x + e) - self.f(x - e)) / (2.0 * h)
        return out

    def hess(self, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._hess is not None:
            return np.asarray(self._hess(x), dtype=float)
        n = len(x)
        out = np.empty((n, n))
        for a in range(n):
            ea = np.zeros(n)
            ea[a] = h
            out[a, a] = (self.f(x + ea) - 2.0 * self.f(x) + self.f(x - ea)) / h ** 2
            for b in range(a + 1, n):
                eb = np.zeros(n)
                eb[b] = h
                v = (self.f(x + ea + eb) - self.f(x + ea - eb)
                     - self.f(x - ea + eb) + self.f(x - ea - eb)) / (4 * h * h)
                out[a, b] = out[b, a] = v
        return out


def weight_r(x: np.ndarray) -> float:
    return max(float(np.linalg.norm(x)), 1.0)


@dataclass(frozen=True)
class WeightedNormResult:
    value: float
    tail_estimate: float
    spec: WeightedSpaceSpec


def _derivative_magnitude(field: ScalarField, x: np.ndarray, order: int,
                          h: float) -> float:
    if order == 0:
        return abs(field(x))
    if order == 1:
        return float(np.linalg.norm(field.grad(x, h)))
    if order == 2:
        return float(np.linalg.norm(field.hess(x, h)))
    raise ValueError("weighted norms support k <= 2 at desk scale")


def weighted_norm(field, spec: WeightedSpaceSpec, domain: Domain,
                  h: Optional[float] = None,
                  n_shells: int = 24, decay_hint: Optional[float] = None
                  ) -> WeightedNormResult:
    """Weighted norm of a scalar field over the truncated domain.

    Derivatives are taken in the asymptotic chart (finite differences unless
    the field carries exact evaluators); r(x) = max(|x|, 1).  Holder
    seminorms sample a fixed set of near-diagonal pairs.  The tail estimate
    extrapolates the integrand from the outermost shell using the observed
    decay (or `decay_hint`).
    """
    if not isinstance(field, ScalarField):
        field = ScalarField(field)
    n = domain.n
    h = h if h is not None else domain.h
    region = quadr.HALF if domain.kind == HALF_SPACE else quadr.QUARTER
    aspec = quadr.QuadratureSpec(n_theta=10, n_phi=20)
    dirs, wang = quadr.sphere_directions(aspec, region, n)
    radii = np.geomspace(0.4, domain.r_outer * 0.98, n_shells)

    orders = range(spec.k + 1)
    if spec.kind == LQ_K_GAMMA and np.isfinite(spec.q):
        # sum_i ( int (r^{i-gamma} |D^i w|)^q r^-n dv )^{1/q}
        log_r = np.log(radii)
        wr = np.gradient(log_r) * radii ** n  # dv = r^{n-1} dr = r^n dlogr
        total = 0.0
        last_shell = 0.0
        for i in orders:
            acc = 0.0
            for rho, wrho in zip(radii, wr):
                shell = 0.0
                for d, wa in zip(dirs, wang):
                    x = rho * d
                    val = (weight_r(x) ** (i - spec.gamma)
                           * _derivative_magnitude(field, x, i, h))
                    shell += wa * val ** spec.q * weight_r(x) ** (-n)
                acc += wrho * shell
                if rho == radii[-1]:
                    last_shell = wrho * shell
            total += acc ** (1.0 / spec.q)
        return WeightedNormResult(float(total), float(abs(last_shell)), spec)

    # sup-type norms (C^k_gamma, the sup part of L^inf, Holder base)
    total = 0.0
    tail = 0.0
    for i in orders:
        sup = 0.0
        outer = 0.0
        for rho in radii:
            for d in dirs:
                x = rho * d
                val = (weight_r(x) ** (i - spec.gamma)
                       * _derivative_magnitude(field, x, i, h))
                sup = max(sup, val)
                if rho == radii[-1]:
                    outer = max(outer, val)
        total += sup
        tail = max(tail, outer)

    if spec.kind == CK_ALPHA_GAMMA:
        seminorm = 0.0
        pair_dirs = np.eye(n)
        for rho in radii[:: max(1, n_shells // 8)]:
            for d in dirs[:: max(1, len(dirs) // 6)]:
                x = rho * d
                for pd in pair_dirs:
                    for eps in (h, 2.0 * h, 4.0 * h):
                        y = x + eps * pd
                        gx = field.grad(x, h) if spec.k >= 1 else None
                        if spec.k == 0:
                            diff = abs(field(x) - field(y))
                        else:
                            diff = float(np.linalg.norm(gx - field.grad(y, h)))
                        wmin = min(weight_r(x), weight_r(y))
                        seminorm = max(
                            seminorm,
                            wmin ** (-spec.gamma + spec.k + spec.alpha)
                            * diff / eps ** spec.alpha)
        total += seminorm

    return WeightedNormResult(float(total), float(tail), spec)


# -- quarter-space Green function ----------------------------------------------

def _images(y: np.ndarray) -> np.ndarray:
    """The reflection orbit {y, y~, y', y~'} through the two faces."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    tilde = y.copy()
    tilde[n - 1] = -tilde[n - 1]
    prime = y.copy()
    prime[0] = -prime[0]
    both = prime.copy()
    both[n - 1] = -both[n - 1]
    return np.stack([y, tilde, prime, both])


def quarter_green(x: np.ndarray, y: np.ndarray, n: int = 3) -> float:
    """G(x, y) = sum over the four reflected sources of |x - y_i|^{2-n}.

    Harmonic in x away from the sources, with vanishing normal derivative on
    both faces by the image symmetry.
    """
    x = np.asarray(x, dtype=float)
    total = 0.0
    for img in _images(y):
        d = float(np.linalg.norm(x - img))
        if d < 1e-12:
            raise ValueError("Green kernel evaluated at a source point")
        total += d ** (2 - n)
    return total


def quarter_green_grad_x(x: np.ndarray, y: np.ndarray, n: int = 3) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(len(x))
    for img in _images(y):
        diff = x - img
        d = float(np.linalg.norm(diff))
        if d < 1e-12:
            raise ValueError("Green kernel gradient at a source point")
        out += (2 - n) * d ** (-n) * diff
    return out


@dataclass
class GreenData:
    """Bulk and boundary data of a test function for the representation
    formula; sphere closure data makes the truncated identity exact."""

    lap: Optional[Callable[[np.ndarray], float]] = None
    du_face1: Optional[Callable[[np.ndarray], float]] = None
    du_facen: Optional[Callable[[np.ndarray], float]] = None
    sphere_u: Optional[Callable[[np.ndarray], float]] = None
    sphere_du_dr: Optional[Callable[[np.ndarray], float]] = None
    lap_support_radius: Optional[float] = None


def green_representation(u_data: GreenData, y: np.ndarray, r_outer: float,
                         spec: Optional[quadr.QuadratureSpec] = None,
                         n: int = 3, patch_radius: float = 0.25) -> float:
    """Reconstruct u(y) on the quarter space from
    (2-n) omega_{n-1} u(y) = int G Lap u + int_{x1=0} G du/dx1
    + int_{xn=0} G du/dxn - closure, closure the truncation-sphere term
    (it vanishes as r_outer grows for decaying u).

    When the bulk term is active and y lies inside the support of Lap u, a
    polar patch around y resolves the kernel singularity; y must keep
    distance patch_radius from the faces.
    """
    y = np.asarray(y, dtype=float)
    spec = spec or quadr.QuadratureSpec(n_theta=40, n_phi=80, n_r=64)
    total = 0.0

    if u_data.lap is not None:
        sup_r = u_data.lap_support_radius
        needs_patch = sup_r is None or np.linalg.norm(y) <= sup_r + patch_radius
        if needs_patch and (y[0] < patch_radius or y[n - 1] < patch_radius):
            raise ValueError("probe point too close to a face for the "
                             "singular patch")
        breaks = (np.linalg.norm(y),) if needs_patch else ()
        pts, w = quadr.ball_rule(r_outer, spec, quadr.QUARTER, breaks=breaks, n=n)
        if needs_patch:
            keep = np.linalg.norm(pts - y, axis=1) > patch_radius
        else:
            keep = np.ones(len(pts), dtype=bool)
        vals = np.array([quarter_green(p, y, n) * u_data.lap(p)
                         for p in pts[keep]])
        total += quadr.fixed_order_sum(vals, w[keep])
        if needs_patch:
            # local polar rule on the excluded ball: s^{2-n} * s^{n-1} is regular
            pspec = quadr.QuadratureSpec(n_theta=16, n_phi=32, n_r=24)
            pdirs, pang = quadr.sphere_directions(pspec, quadr.FULL, n)
            ss, ws = quadr.radial_segments(patch_radius, n_r=pspec.n_r)
            acc = 0.0
            for s_val, w_s in zip(ss, ws):
                for d, wa in zip(pdirs, pang):
                    xp = y + s_val * d
                    if xp[0] < 0.0 or xp[n - 1] < 0.0:
                        continue
                    acc += (w_s * wa * s_val ** (n - 1)
                            * quarter_green(xp, y, n) * u_data.lap(xp))
            total += acc

    for face_axis, du in ((0, u_data.du_face1), (n - 1, u_data.du_facen)):
        if du is None:
            continue
        pts, w = quadr.face_disc_rule(face_axis, r_outer, spec, quadr.QUARTER, n=n)
        vals = np.array([quarter_green(p, y, n) * du(p) for p in pts])
        total += quadr.fixed_order_sum(vals, w)

    if u_data.sphere_u is not None and u_data.sphere_du_dr is not None:
        pts, w = quadr.sphere_rule(r_outer, spec, quadr.QUARTER, n)
        vals = np.empty(len(pts))
        for i, p in enumerate(pts):
            G = quarter_green(p, y, n)
            dG = float(quarter_green_grad_x(p, y, n) @ (p / np.linalg.norm(p)))
            vals[i] = G * u_data.sphere_du_dr(p) - u_data.sphere_u(p) * dG
        total -= quadr.fixed_order_sum(vals, w)

    return total / ((2.0 - n) * unit_sphere_area(n))


# -- Robin problems on box grids -------------------------------------------------

@dataclass
class RobinProblem:
    """Data of T(u) = (-Delta_g u + h u, du/deta_1 + h1 u, du/deta_2 + h2 u)
    = (f, f1, f2) with the sign hypotheses h >= 0, h1 >= 0 of the
    isomorphism regime."""

    metric: MetricField
    h: Callable[[np.ndarray], float] = lambda x: 0.0
    h1: Callable[[np.ndarray], float] = lambda x: 0.0
    h2: Optional[Callable[[np.ndarray], float]] = None
    f: Callable[[np.ndarray], float] = lambda x: 0.0
    f1: Callable[[np.ndarray], float] = lambda x: 0.0
    f2: Callable[[np.ndarray], float] = lambda x: 0.0
    gamma: float = -0.75

    def __post_init__(self):
        if self.metric.n < 3:
            raise ValueError("n >= 3 required")
        if not (2 - self.metric.n < self.gamma < 0):
            raise ValueError("gamma must lie in (2-n, 0)")
        for p in (np.array([0.5, 0.3, 0.4]), np.array([2.0, -1.0, 1.5]),
                  np.array([0.0, 1.0, 0.5])):
            if self.h(p) < -1e-12:
                raise ValueError("zeroth-order coefficient h must be >= 0")
        for p in (np.array([0.0, 1.0, 0.5]), np.array([0.0, -2.0, 1.0])):
            if self.h1(p) < -1e-12:
                raise ValueError("boundary coefficient h1 must be >= 0")


@dataclass
class BvpSolution:
    """A decaying correction field with its discrete diagnostics."""

    w: Callable[[np.ndarray], float]
    residual_interior: float
    residual_boundary: tuple
    weighted_norm_report: dict
    decay_fit: float
    sup_abs: float
    meta: dict = dc_field(default_factory=dict)

    def u(self, x) -> float:
        return 1.0 + self.w(x)


class BoxGrid:
    """Uniform tensor grid on the bounding box of a half/quarter domain."""

    def __init__(self, domain: Domain, h_grid: float,
                 box_extent: Optional[float] = None):
        if domain.n != 3:
            raise NotImplementedError("box solver implemented for n = 3")
        self.domain = domain
        self.h = float(h_grid)
        L = box_extent if box_extent is not None else domain.r_outer
        self.L = float(L)
        m = int(round(L / h_grid))
        if abs(m * h_grid - L) > 1e-9 * L:
            raise ValueError("box extent must be a multiple of h_grid")
        axes = []
        for a in range(3):
            if a in domain.face_axes:
                axes.append(np.linspace(0.0, L, m + 1))
            else:
                axes.append(np.linspace(-L, L, 2 * m + 1))
        self.axes = axes
        self.shape = tuple(len(ax) for ax in axes)

    def points(self) -> np.ndarray:
        X = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in X], axis=-1)

    def r(self) -> np.ndarray:
        return np.linalg.norm(self.points(), axis=1).reshape(self.shape)


def _diag_metric_arrays(metric: MetricField, pts: np.ndarray, shape):
    """(sqrt(det g), g^{aa} diagonal) on the grid; rejects non-diagonal g."""
    N = len(pts)
    diag = np.empty((N, 3))
    dets = np.empty(N)
    for i, p in enumerate(pts):
        g = metric.eval(p)
        off = abs(g[0, 1]) + abs(g[0, 2]) + abs(g[1, 2])
        if off > 1e-12 * max(1.0, abs(g).max()):
            raise NotImplementedError(
                "box solver supports diagonal metrics; rotate the chart or "
                "use the radial lane for non-diagonal fields")
        diag[i] = np.diagonal(g)
        dets[i] = np.prod(np.diagonal(g))
    sqrtg = np.sqrt(dets).reshape(shape)
    ginv_diag = (1.0 / diag).reshape(shape + (3,))
    return sqrtg, ginv_diag


def solve_robin_bvp(problem: RobinProblem, domain: Domain, h_grid: float,
                    box_extent: Optional[float] = None,
                    dirichlet: Optional[Callable[[np.ndarray], float]] = None,
                    far_field_passes: int = 2,
                    rtol: float = 1e-12) -> BvpSolution:
    """Second-order discrete solve of the Robin problem on the box grid.

    Far faces carry Dirichlet data: `dirichlet(x)` when given (manufactured
    solutions), otherwise the fitted a r^gamma closure iterated
    `far_field_passes` times from a zero start.
    """
    grid = BoxGrid(domain, h_grid, box_extent)
    if dirichlet is not None:
        w, meta = _assemble_and_solve(problem, grid, dirichlet, rtol)
    else:
        # bootstrap with an absorbing (radial-decay) closure, then impose
        # Dirichlet data a r^gamma fitted on that solution; extra passes
        # refine the fit on the Dirichlet-closed solves
        w, _ = _assemble_and_solve(problem, grid, None, rtol,
                                   absorbing_gamma=problem.gamma)
        a_fit, g_fit = _fit_far_field(w, grid, problem.gamma)
        for _ in range(max(1, far_field_passes - 1)):
            closure = lambda x, a=a_fit, g=g_fit: \
                a * max(np.linalg.norm(x), 1.0) ** g
            w, meta = _assemble_and_solve(problem, grid, closure, rtol)
            a_new, g_new = _fit_far_field(w, grid, problem.gamma)
            done = (abs(a_new - a_fit) < 1e-3 * (abs(a_fit) + 1e-12)
                    and abs(g_new - g_fit) < 1e-3)
            a_fit, g_fit = a_new, g_new
            if done:
                break
        meta["far_field_amplitude"] = a_fit
        meta["far_field_exponent"] = g_fit

    interp = _grid_interpolator(w, grid)
    sup = float(np.abs(w).max())
    decay = meta.get("far_field_exponent", problem.gamma)
    return BvpSolution(
        w=interp, residual_interior=meta["residual"],
        residual_boundary=(meta["residual"],) * len(domain.face_axes),
        weighted_norm_report={}, decay_fit=float(decay), sup_abs=sup,
        meta={**meta, "grid_shape": grid.shape, "h": grid.h,
              "values": w})


def _grid_interpolator(w: np.ndarray, grid: BoxGrid):
    from scipy.interpolate import RegularGridInterpolator

    rgi = RegularGridInterpolator(tuple(grid.axes), w, method="linear",
                                  bounds_error=False, fill_value=None)

    def interp(x):
        return float(rgi(np.asarray(x, dtype=float)[None, :])[0])

    return interp


def _fit_far_field(w: np.ndarray, grid: BoxGrid, gamma: float):
    """Log-log regression of the leading decay a r^gamma_eff over the band
    of nodes with r in (0.3 L, 0.65 L) (deep enough to escape boundary
    pollution from the previous pass)."""
    r = grid.r()
    L = grid.L
    mask = (r >= 0.30 * L) & (r <= 0.65 * L) & (np.abs(w) > 1e-300)
    if mask.sum() < 16:
        return 0.0, gamma
    vals = w[mask]
    sign = 1.0 if np.median(np.sign(vals)) >= 0 else -1.0
    logs = np.log(np.abs(vals))
    logr = np.log(r[mask])
    slope, intercept = np.polyfit(logr, logs, 1)
    g_eff = float(np.clip(slope, gamma - 1.5, -0.05))
    a = sign * float(np.exp(intercept))
    return a, g_eff


def _assemble_and_solve(problem: RobinProblem, grid: BoxGrid,
                        dirichlet: Optional[Callable[[np.ndarray], float]],
                        rtol: float,
                        absorbing_gamma: Optional[float] = None):
    h = grid.h
    shape = grid.shape
    pts = grid.points()
    metric = problem.metric
    sqrtg, ginv_diag = _diag_metric_arrays(metric, pts, shape)
    N = int(np.prod(shape))
    idx = np.arange(N).reshape(shape)

    face_axes = grid.domain.face_axes
    is_dirichlet = np.zeros(shape, dtype=bool)
    # far_axis/far_sign record which face a far node belongs to (corners keep
    # the last axis written; any consistent choice works for the closure row)
    far_axis = np.full(shape, -1, dtype=np.int8)
    far_sign = np.zeros(shape, dtype=np.int8)
    for a in range(3):
        sl = [slice(None)] * 3
        sl[a] = -1
        is_dirichlet[tuple(sl)] = True
        far_axis[tuple(sl)] = a
        far_sign[tuple(sl)] = +1
        if a not in face_axes:
            sl[a] = 0
            is_dirichlet[tuple(sl)] = True
            far_axis[tuple(sl)] = a
            far_sign[tuple(sl)] = -1

    pts3 = pts.reshape(shape + (3,))
    hvals = np.array([problem.h(p) for p in pts]).reshape(shape)
    fvals = np.array([problem.f(p) for p in pts]).reshape(shape)

    # face-midpoint conductivities sigma_a = sqrt(g) g^{aa} at +-h/2
    def sigma_at(points):
        out = np.empty(len(points))
        for i, p in enumerate(points):
            g = metric.eval(p)
            out[i] = np.sqrt(np.prod(np.diagonal(g))) / g.diagonal()[0]
        return out

    rows, cols, data = [], [], []
    rhs = np.zeros(N)

    def add(r_, c_, v_):
        rows.append(r_)
        cols.append(c_)
        data.append(v_)

    strides = [int(np.prod(shape[a + 1:])) for a in range(3)]

    # conductivity per axis at face midpoints, vectorized per axis
    sigma_face = []
    for a in range(3):
        shifted = pts3.copy().reshape(-1, 3)
        shifted[:, a] += 0.5 * h
        sig = np.empty(len(shifted))
        for i, p in enumerate(shifted):
            g = metric.eval(p)
            sig[i] = np.sqrt(np.prod(np.diagonal(g))) * (1.0 / g[a, a])
        sigma_face.append(sig.reshape(shape))

    it = np.ndindex(shape)
    for ijk in it:
        row = int(idx[ijk])
        if is_dirichlet[ijk]:
            if absorbing_gamma is None:
                add(row, row, 1.0)
                rhs[row] = dirichlet(pts3[ijk])
            else:
                # radial-decay closure d_a u ~ x^_a (gamma/r) u, one-sided
                a = int(far_axis[ijk])
                sgn = float(far_sign[ijk])
                x = pts3[ijk]
                r = float(np.linalg.norm(x))
                inner = list(ijk)
                inner[a] -= int(sgn)
                xh_a = x[a] / r
                add(row, row, sgn / h - xh_a * absorbing_gamma / r)
                add(row, int(idx[tuple(inner)]), -sgn / h)
                rhs[row] = 0.0
            continue
        x = pts3[ijk]
        dens = sqrtg[ijk]
        diag_val = hvals[ijk]
        rhs_val = fvals[ijk]
        for a in range(3):
            ip = list(ijk)
            ip[a] += 1
            im = list(ijk)
            im[a] -= 1
            sig_p = sigma_face[a][ijk]
            if im[a] >= 0:
                imt = tuple(im)
                sig_m = sigma_face[a][imt]
                # -(1/dens) [sig_p (u_+ - u_0) - sig_m (u_0 - u_-)]/h^2
                add(row, int(idx[tuple(ip)]), -sig_p / (dens * h * h))
                add(row, int(idx[imt]), -sig_m / (dens * h * h))
                diag_val += (sig_p + sig_m) / (dens * h * h)
            else:
                # Robin face at x_a = 0: ghost elimination with
                # du/deta = -(1/sqrt(g_aa)) d_a u, eta outward
                g = metric.eval(x)
                sqrt_gaa = np.sqrt(g[a, a])
                hb = problem.h1(x) if a == 0 else (
                    problem.h2(x) if problem.h2 is not None else 0.0)
                fb = problem.f1(x) if a == 0 else problem.f2(x)
                xm = x.copy()
                xm[a] -= 0.5 * h
                gm = metric.eval(xm)
                sig_m = np.sqrt(np.prod(np.diagonal(gm))) / gm[a, a]
                # ghost: u_g = u_+ + 2 h sqrt(g_aa) (f_b - h_b u_0)
                add(row, int(idx[tuple(ip)]),
                    -(sig_p + sig_m) / (dens * h * h))
                diag_val += (sig_p + sig_m) / (dens * h * h)
                diag_val += sig_m * 2.0 * sqrt_gaa * hb / (dens * h)
                rhs_val += sig_m * 2.0 * sqrt_gaa * fb / (dens * h)
        add(row, row, diag_val)
        rhs[row] = rhs_val

    A = sparse.csr_matrix((data, (rows, cols)), shape=(N, N))
    b = rhs

    # row equilibration keeps the ILU pivots healthy across the h^-2 spread
    dinv = 1.0 / np.abs(A.diagonal())
    Aeq = sparse.diags(dinv) @ A
    beq = dinv * b

    x0 = np.zeros(N)
    try:
        ilu = spla.spilu(Aeq.tocsc(), drop_tol=1e-6, fill_factor=16)
        M = spla.LinearOperator((N, N), ilu.solve)
        sol, info = spla.bicgstab(Aeq, beq, x0=x0, rtol=rtol, atol=0.0,
                                  maxiter=2000, M=M)
        if info != 0:
            sol, info = spla.gmres(Aeq, beq, x0=x0, rtol=rtol, atol=0.0,
                                   restart=200, maxiter=50, M=M)
        if info != 0:
            raise SolverError(f"iterative solve did not converge (info={info})")
    except RuntimeError as exc:
        raise SolverError(f"preconditioner failure: {exc}") from exc

    res = float(np.linalg.norm(Aeq @ sol - beq)
                / max(np.linalg.norm(beq), 1e-300))
    res_raw = float(np.linalg.norm(A @ sol - b)
                    / max(np.linalg.norm(b), 1e-300))
    if res > 1e-9:
        raise SolverError(f"linear residual {res:.3e} above tolerance 1e-9")
    return sol.reshape(shape), {"residual": res, "residual_unscaled": res_raw}
