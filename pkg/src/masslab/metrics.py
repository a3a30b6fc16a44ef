"""Riemannian metric fields on flat background charts.

A metric field is a symmetric 2-tensor evaluator g_ab(x) on a half- or
quarter-space chart, optionally with exact first/second coefficient
derivatives.  Two-piece fields carry one-sided evaluators (g_minus, g_plus)
meeting continuously on the interface sphere |x| = r0; callers select a side
for one-sided limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

MINUS = "minus"
PLUS = "plus"

#: sentinel decay rate for exactly flat fields
TAU_INFINITE = float("inf")


class MetricError(Exception):
    """Bad metric data: asymmetric, non-positive-definite, or out of domain."""


@dataclass(frozen=True)
class RadialProfile:
    """Scalar radial data A(r), B(r) for g_ab = A r^_a r^_b + B (d_ab - r^_a r^_b).

    A is the radial-radial coefficient, B the tangential one.  Derivative
    callables may be one-sided at an interface radius; they receive plain
    floats and return floats.
    """

    A: Callable[[float], float]
    B: Callable[[float], float]
    dA: Optional[Callable[[float], float]] = None
    dB: Optional[Callable[[float], float]] = None
    ddA: Optional[Callable[[float], float]] = None
    ddB: Optional[Callable[[float], float]] = None

    @property
    def has_derivatives(self) -> bool:
        return None not in (self.dA, self.dB, self.ddA, self.ddB)


def _projector_pair(x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise MetricError("radial metric evaluated at the origin")
    xh = x / r
    P = np.outer(xh, xh)
    return r, xh, P


def radial_tensor(A: float, B: float, x: np.ndarray) -> np.ndarray:
    _, _, P = _projector_pair(np.asarray(x, dtype=float))
    n = len(x)
    return A * P + B * (np.eye(n) - P)


def radial_tensor_d(A: float, B: float, dA: float, dB: float,
                    x: np.ndarray) -> np.ndarray:
    """dg[a,b,c] = d_c g_ab for g = A P + B (I - P), P = x^ (x) x^."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    r, xh, P = _projector_pair(x)
    eye = np.eye(n)
    # dP[a,b,c] = (d_ac xh_b + d_bc xh_a - 2 xh_a xh_b xh_c)/r
    dP = (np.einsum("ac,b->abc", eye, xh) + np.einsum("bc,a->abc", eye, xh)
          - 2.0 * np.einsum("a,b,c->abc", xh, xh, xh)) / r
    dg = (dA - dB) * np.einsum("ab,c->abc", P, xh) \
        + dB * np.einsum("ab,c->abc", eye, xh) \
        + (A - B) * dP
    return dg


def radial_tensor_dd(A: float, B: float, dA: float, dB: float,
                     ddA: float, ddB: float, x: np.ndarray) -> np.ndarray:
    """ddg[a,b,c,d] = d_c d_d g_ab for the radial two-tensor."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    r, xh, P = _projector_pair(x)
    eye = np.eye(n)
    # first/second derivatives of the unit vector: dxh[a,c] = (d_ac - xh_a xh_c)/r
    dxh = (eye - P) / r
    # ddxh[a,c,d] = d_d dxh[a,c]
    ddxh = (-np.einsum("ad,c->acd", eye, xh) - np.einsum("cd,a->acd", eye, xh)
            - np.einsum("ac,d->acd", eye, xh)
            + 3.0 * np.einsum("a,c,d->acd", xh, xh, xh)) / (r * r)
    # dP[a,b,c], ddP[a,b,c,d]
    dP = np.einsum("ac,b->abc", dxh, xh) + np.einsum("bc,a->abc", dxh, xh)
    ddP = (np.einsum("acd,b->abcd", ddxh, xh) + np.einsum("ac,bd->abcd", dxh, dxh)
           + np.einsum("bcd,a->abcd", ddxh, xh) + np.einsum("bc,ad->abcd", dxh, dxh))
    D, dD, ddD = A - B, dA - dB, ddA - ddB
    ddg = (ddB * np.einsum("ab,c,d->abcd", eye, xh, xh)
           + dB * np.einsum("ab,cd->abcd", eye, dxh)
           + ddD * np.einsum("ab,c,d->abcd", P, xh, xh)
           + dD * np.einsum("ab,cd->abcd", P, dxh)
           + dD * (np.einsum("abd,c->abcd", dP, xh) + np.einsum("abc,d->abcd", dP, xh))
           + D * ddP)
    return ddg


class MetricField:
    """Symmetric 2-tensor field with optional exact coefficient derivatives."""

    def __init__(self, n: int, g: Callable[[np.ndarray], np.ndarray],
                 dg: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 ddg: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 mode: str = "analytic", tau: float = TAU_INFINITE,
                 C_decay: float = 0.0, name: str = "metric",
                 radial: Optional[RadialProfile] = None,
                 conformal_u: Optional[Callable[[float], float]] = None):
        self.n = int(n)
        self._g = g
        self._dg = dg
        self._ddg = ddg
        self.mode = mode
        self.tau = float(tau)
        self.C_decay = float(C_decay)
        self.name = name
        self.radial = radial
        #: radial conformal factor u(r) when g = u^{4/(n-2)} delta, else None
        self.conformal_u = conformal_u
        self.interface_radius: Optional[float] = None

    # -- evaluation ------------------------------------------------------

    def eval(self, x: np.ndarray, side: Optional[str] = None) -> np.ndarray:
        return self._g(np.asarray(x, dtype=float))

    def d_eval(self, x: np.ndarray, side: Optional[str] = None) -> Optional[np.ndarray]:
        if self._dg is None:
            return None
        return self._dg(np.asarray(x, dtype=float))

    def dd_eval(self, x: np.ndarray, side: Optional[str] = None) -> Optional[np.ndarray]:
        if self._ddg is None:
            return None
        return self._ddg(np.asarray(x, dtype=float))

    @property
    def has_exact_derivatives(self) -> bool:
        return self._dg is not None and self._ddg is not None

    def piece(self, side: Optional[str]) -> "MetricField":
        """The single-piece evaluator for a requested side (self if smooth)."""
        return self

    def resolve_piece(self, x: np.ndarray, side: Optional[str]) -> "MetricField":
        """The concrete piece governing evaluation at x (self if smooth)."""
        return self

    def __repr__(self) -> str:  # pragma: no cover
        return f"<MetricField {self.name!r} n={self.n} mode={self.mode}>"


class TwoPieceMetricField(MetricField):
    """Continuous metric assembled from one-sided pieces across |x| = r0.

    Side selection at evaluation: strictly inside (|x| < r0) uses g_minus,
    strictly outside g_plus; exactly on the interface the default is the
    minus side, overridable with side="plus".
    """

    def __init__(self, minus: MetricField, plus: MetricField, r0: float,
                 tau: float, C_decay: float = 0.0, name: str = "two_piece",
                 matching_tol: float = 1e-10):
        super().__init__(minus.n, g=None, mode="two_piece", tau=tau,
                         C_decay=C_decay, name=name)
        if minus.n != plus.n:
            raise MetricError("piece dimensions disagree")
        self.minus = minus
        self.plus = plus
        self.interface_radius = float(r0)
        self.matching_tol = float(matching_tol)

    def _side_of(self, x: np.ndarray, side: Optional[str]) -> MetricField:
        if side == MINUS:
            return self.minus
        if side == PLUS:
            return self.plus
        if side is not None:
            raise ValueError(f"side must be 'minus', 'plus' or None, got {side!r}")
        r = float(np.linalg.norm(x))
        return self.plus if r > self.interface_radius else self.minus

    def piece(self, side: Optional[str]) -> MetricField:
        if side is None:
            side = MINUS
        return self.minus if side == MINUS else self.plus

    def resolve_piece(self, x: np.ndarray, side: Optional[str]) -> MetricField:
        return self._side_of(np.asarray(x, dtype=float), side)

    def eval(self, x: np.ndarray, side: Optional[str] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._side_of(x, side).eval(x)

    def d_eval(self, x: np.ndarray, side: Optional[str] = None) -> Optional[np.ndarray]:
        x = np.asarray(x, dtype=float)
        return self._side_of(x, side).d_eval(x)

    def dd_eval(self, x: np.ndarray, side: Optional[str] = None) -> Optional[np.ndarray]:
        x = np.asarray(x, dtype=float)
        return self._side_of(x, side).dd_eval(x)

    @property
    def has_exact_derivatives(self) -> bool:
        return self.minus.has_exact_derivatives and self.plus.has_exact_derivatives

    def continuity_defect(self, directions: np.ndarray) -> float:
        """Max |g_- - g_+| over interface points r0 * direction."""
        worst = 0.0
        for d in np.atleast_2d(directions):
            x = self.interface_radius * np.asarray(d) / np.linalg.norm(d)
            gap = np.abs(self.minus.eval(x) - self.plus.eval(x)).max()
            worst = max(worst, float(gap))
        return worst


# -- constructors ----------------------------------------------------------

def euclidean(n: int = 3) -> MetricField:
    eye = np.eye(n)
    zeros3 = np.zeros((n, n, n))
    zeros4 = np.zeros((n, n, n, n))
    return MetricField(
        n, g=lambda x: eye.copy(), dg=lambda x: zeros3.copy(),
        ddg=lambda x: zeros4.copy(), tau=TAU_INFINITE, C_decay=0.0,
        name="euclidean",
        radial=RadialProfile(A=lambda r: 1.0, B=lambda r: 1.0,
                             dA=lambda r: 0.0, dB=lambda r: 0.0,
                             ddA=lambda r: 0.0, ddB=lambda r: 0.0),
        conformal_u=lambda r: 1.0)


def from_radial_profile(profile: RadialProfile, n: int = 3,
                        tau: float = 1.0, C_decay: float = 1.0,
                        name: str = "radial",
                        conformal_u: Optional[Callable[[float], float]] = None,
                        ) -> MetricField:
    def g(x: np.ndarray) -> np.ndarray:
        r = float(np.linalg.norm(x))
        return radial_tensor(profile.A(r), profile.B(r), x)

    dg = ddg = None
    if profile.has_derivatives:
        def dg(x: np.ndarray) -> np.ndarray:
            r = float(np.linalg.norm(x))
            return radial_tensor_d(profile.A(r), profile.B(r),
                                   profile.dA(r), profile.dB(r), x)

        def ddg(x: np.ndarray) -> np.ndarray:
            r = float(np.linalg.norm(x))
            return radial_tensor_dd(profile.A(r), profile.B(r),
                                    profile.dA(r), profile.dB(r),
                                    profile.ddA(r), profile.ddB(r), x)

    return MetricField(n, g=g, dg=dg, ddg=ddg, tau=tau, C_decay=C_decay,
                       name=name, radial=profile, conformal_u=conformal_u)


def radial_conformal(u: Callable[[float], float],
                     du: Optional[Callable[[float], float]] = None,
                     ddu: Optional[Callable[[float], float]] = None,
                     n: int = 3, tau: float = 1.0, C_decay: float = 1.0,
                     name: str = "conformal") -> MetricField:
    """g = u(r)^{4/(n-2)} delta for a radial conformal factor u > 0."""
    k = 4.0 / (n - 2)

    def A(r: float) -> float:
        return u(r) ** k

    dA = ddA = None
    if du is not None:
        def dA(r: float) -> float:
            return k * u(r) ** (k - 1) * du(r)
    if du is not None and ddu is not None:
        def ddA(r: float) -> float:
            ur = u(r)
            return k * (k - 1) * ur ** (k - 2) * du(r) ** 2 + k * ur ** (k - 1) * ddu(r)

    profile = RadialProfile(A=A, B=A, dA=dA, dB=dA, ddA=ddA, ddB=ddA)
    return from_radial_profile(profile, n=n, tau=tau, C_decay=C_decay,
                               name=name, conformal_u=u)


def conformally_flat(u: Callable[[np.ndarray], float],
                     grad_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                     hess_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                     n: int = 3, tau: float = 1.0, C_decay: float = 1.0,
                     name: str = "conformal") -> MetricField:
    """g = u(x)^{4/(n-2)} delta for a (possibly non-radial) factor u > 0."""
    k = 4.0 / (n - 2)
    eye = np.eye(n)

    def g(x: np.ndarray) -> np.ndarray:
        return u(x) ** k * eye

    dg = ddg = None
    if grad_u is not None:
        def dg(x: np.ndarray) -> np.ndarray:
            ux = u(x)
            return k * ux ** (k - 1) * np.einsum("ab,c->abc", eye, grad_u(x))
    if grad_u is not None and hess_u is not None:
        def ddg(x: np.ndarray) -> np.ndarray:
            ux, gu, hu = u(x), grad_u(x), hess_u(x)
            scal = k * (k - 1) * ux ** (k - 2) * np.outer(gu, gu) \
                + k * ux ** (k - 1) * hu
            return np.einsum("ab,cd->abcd", eye, scal)

    return MetricField(n, g=g, dg=dg, ddg=ddg, tau=tau, C_decay=C_decay, name=name)


def schwarzschild_half(m: float = 1.0, n: int = 3) -> MetricField:
    """Conformally flat field with u = 1 + m/(2 r^{n-2}); decay order n-2."""
    if m <= 0:
        raise ValueError("mass parameter m must be positive")
    p = n - 2

    def u(r: float) -> float:
        return 1.0 + m / (2.0 * r ** p)

    def du(r: float) -> float:
        return -p * m / (2.0 * r ** (p + 1))

    def ddu(r: float) -> float:
        return p * (p + 1) * m / (2.0 * r ** (p + 2))

    return radial_conformal(u, du, ddu, n=n, tau=float(p), C_decay=3.0 * m,
                            name=f"schwarzschild(m={m})")


def glued_schwarzschild_flat(m: float = 1.0, r0: float = 2.0,
                             n: int = 3) -> TwoPieceMetricField:
    """Flat interior (constant factor) glued to a Schwarzschild-type exterior.

    The interior conformal factor is the constant u(r0), so the field is
    continuous across |x| = r0 while the radial derivative jumps; the mean
    curvature of the interface satisfies H_- > H_+ for m > 0.
    """
    if m <= 0:
        raise ValueError("mass parameter m must be positive")
    exterior = schwarzschild_half(m=m, n=n)
    u0 = exterior.conformal_u(r0)
    interior = radial_conformal(lambda r: u0, lambda r: 0.0, lambda r: 0.0,
                                n=n, tau=TAU_INFINITE, C_decay=0.0,
                                name=f"flat-core(u={u0})")
    fld = TwoPieceMetricField(interior, exterior, r0, tau=float(n - 2),
                              C_decay=3.0 * m,
                              name=f"glued(m={m}, r0={r0})")
    fld.conformal_u = lambda r: u0 if r < r0 else exterior.conformal_u(r)
    return fld


def compact_perturbation(amplitude: float = 0.1, center: float = 4.0,
                         width: float = 1.0, n: int = 3) -> MetricField:
    """Conformal factor 1 + amplitude * bump((r - center)/width); exactly
    Euclidean outside |r - center| >= width."""

    def bump(s: float) -> float:
        if abs(s) >= 1.0:
            return 0.0
        return float(np.exp(-1.0 / (1.0 - s * s)) * np.e)

    def dbump(s: float) -> float:
        if abs(s) >= 1.0:
            return 0.0
        q = 1.0 - s * s
        return float(-2.0 * s / q ** 2 * np.exp(-1.0 / q) * np.e)

    def ddbump(s: float) -> float:
        if abs(s) >= 1.0:
            return 0.0
        q = 1.0 - s * s
        e = np.exp(-1.0 / q) * np.e
        return float(e * (4.0 * s * s / q ** 4 - 2.0 / q ** 2 - 8.0 * s * s / q ** 3))

    def u(r: float) -> float:
        return 1.0 + amplitude * bump((r - center) / width)

    def du(r: float) -> float:
        return amplitude * dbump((r - center) / width) / width

    def ddu(r: float) -> float:
        return amplitude * ddbump((r - center) / width) / width ** 2

    fld = radial_conformal(u, du, ddu, n=n, tau=TAU_INFINITE, C_decay=0.0,
                           name="compact_perturbation")
    fld.support_radius = center + width
    return fld


def stereographic_sphere(n: int = 3) -> MetricField:
    """Round unit-sphere metric in a stereographic chart: g = (2/(1+r^2))^2 delta.

    Scalar curvature is the constant n(n-1); used as an analytic oracle.
    """
    k = 4.0 / (n - 2)
    e = (n - 2) / 2.0  # u = (2/(1+r^2))^{(n-2)/2}

    def u(r: float) -> float:
        return (2.0 / (1.0 + r * r)) ** e

    def du(r: float) -> float:
        return e * (2.0 / (1.0 + r * r)) ** (e - 1) * (-4.0 * r / (1.0 + r * r) ** 2)

    def ddu(r: float) -> float:
        q = 1.0 + r * r
        w = 2.0 / q
        dw = -4.0 * r / q ** 2
        ddw = (-4.0 * q ** 2 + 16.0 * r * r * q) / q ** 4
        return e * (e - 1) * w ** (e - 2) * dw ** 2 + e * w ** (e - 1) * ddw

    fld = radial_conformal(u, du, ddu, n=n, tau=TAU_INFINITE, C_decay=4.0,
                           name="stereographic_sphere")
    fld.exact_scalar_curvature = float(n * (n - 1))
    return fld


# -- checked evaluation (spec-level operation) ------------------------------

def metric_eval(field: MetricField, x: np.ndarray,
                side: Optional[str] = None, domain=None) -> np.ndarray:
    """Evaluate g_ab(x) with symmetry/positive-definiteness validation."""
    x = np.asarray(x, dtype=float)
    if domain is not None:
        domain.require_inside(x)
    g = field.eval(x, side=side)
    if not np.allclose(g, g.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise MetricError(f"asymmetric metric at {x}")
    g = 0.5 * (g + g.T)
    ev_min = float(np.linalg.eigvalsh(g)[0])
    if ev_min <= 0.0:
        raise MetricError(f"metric not positive definite at {x} "
                          f"(min eigenvalue {ev_min:.3e})")
    return g
