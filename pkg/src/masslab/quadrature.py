"""Product Gauss-Legendre rules on spheres, circles, discs and balls
restricted to half- and quarter-space domains (n = 3 charts).

All rules are deterministic; node/weight arrays are built in a fixed order so
reductions are reproducible bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

FULL = "full"
HALF = "half"        # x_1 >= 0
QUARTER = "quarter"  # x_1 >= 0 and x_n >= 0


@dataclass(frozen=True)
class QuadratureSpec:
    """Angular and radial node counts for the surface/volume rules."""

    n_theta: int = 48
    n_phi: int = 96
    n_r: int = 48

    @classmethod
    def scaled(cls, rho: float, h: float, cap: int = 128) -> "QuadratureSpec":
        """Node count growing like rho/h (capped), per the sampling rationale
        that quadrature error should stay below finite-difference error."""
        m = int(min(cap, max(24, round(rho / h))))
        return cls(n_theta=m, n_phi=2 * m, n_r=m)


def _gauss(a: float, b: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(m)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _phi_interval(region: str) -> tuple[float, float]:
    # theta in (0, pi/2) enforces x_1 >= 0; phi restricted for quarter x_n >= 0
    if region == QUARTER:
        return 0.0, np.pi
    return 0.0, 2.0 * np.pi


def sphere_directions(spec: QuadratureSpec, region: str = HALF,
                      n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and unit-sphere area weights over the region.

    n = 3 parametrization x = (cos th, sin th cos ph, sin th sin ph); the
    half region is th in (0, pi/2), the quarter additionally ph in (0, pi).
    """
    if n != 3:
        raise NotImplementedError("quadrature rules are implemented for n = 3")
    th_max = np.pi if region == FULL else np.pi / 2.0
    th, wth = _gauss(0.0, th_max, spec.n_theta)
    p0, p1 = _phi_interval(region)
    ph, wph = _gauss(p0, p1, spec.n_phi)
    TH, PH = np.meshgrid(th, wph * 0 + ph, indexing="ij")
    WTH, WPH = np.meshgrid(wth, wph, indexing="ij")
    dirs = np.stack([np.cos(TH),
                     np.sin(TH) * np.cos(PH),
                     np.sin(TH) * np.sin(PH)], axis=-1).reshape(-1, 3)
    weights = (np.sin(TH) * WTH * WPH).reshape(-1)
    return dirs, weights


def sphere_rule(rho: float, spec: QuadratureSpec, region: str = HALF,
                n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Surface rule on {|x| = rho} restricted to the region (area weights)."""
    dirs, w = sphere_directions(spec, region, n)
    return rho * dirs, rho ** (n - 1) * w


def mirrored_sphere_rule(rho: float, spec: QuadratureSpec, axis: int,
                         n: int = 3) -> tuple[np.ndarray, np.ndarray, int]:
    """Half-region sphere rule built as quarter nodes plus their exact mirror
    images through {x_axis = 0}; returns (points, weights, n_quarter)."""
    pts, w = sphere_rule(rho, spec, QUARTER, n)
    mirrored = pts.copy()
    mirrored[:, axis] = -mirrored[:, axis]
    return np.vstack([pts, mirrored]), np.concatenate([w, w]), len(w)


def boundary_circle_rule(rho: float, face_axis: int, spec: QuadratureSpec,
                         region: str = HALF,
                         n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the (n-2)-sphere {|x| = rho, x_face = 0} within the region.

    For n = 3 this is a circle (full for the half-space boundary term, half
    for each quarter-space face term); weights carry the length element.
    """
    if n != 3:
        raise NotImplementedError("quadrature rules are implemented for n = 3")
    if face_axis == 0:
        # circle in the (x2, x3) plane; quarter keeps x3 >= 0
        p0, p1 = (0.0, np.pi) if region == QUARTER else (0.0, 2.0 * np.pi)
        ph, w = _gauss(p0, p1, spec.n_phi)
        pts = np.stack([np.zeros_like(ph), rho * np.cos(ph), rho * np.sin(ph)],
                       axis=-1)
    elif face_axis == n - 1:
        # circle in the (x1, x2) plane with x1 >= 0
        ph, w = _gauss(-np.pi / 2.0, np.pi / 2.0, spec.n_phi)
        pts = np.stack([rho * np.cos(ph), rho * np.sin(ph), np.zeros_like(ph)],
                       axis=-1)
    else:
        raise ValueError(f"no boundary face on axis {face_axis}")
    return pts, rho * w


def radial_segments(r_outer: float, breaks=(), n_r: int = 48,
                    r_inner: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Composite radial GL nodes on [r_inner, r_outer] split at `breaks`
    (metric kinks, mollification bands) so each panel sees a smooth integrand."""
    cuts = [r_inner] + sorted(b for b in breaks if r_inner < b < r_outer) + [r_outer]
    rs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        frac = (b - a) / (r_outer - r_inner)
        m = max(8, int(round(n_r * max(frac, 0.15))))
        r, w = _gauss(a, b, m)
        rs.append(r)
        ws.append(w)
    return np.concatenate(rs), np.concatenate(ws)


def ball_rule(r_outer: float, spec: QuadratureSpec, region: str = HALF,
              breaks=(), n: int = 3,
              r_inner: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Volume rule on the (half/quarter) ball with Euclidean volume weights."""
    dirs, wang = sphere_directions(spec, region, n)
    rs, wr = radial_segments(r_outer, breaks, spec.n_r, r_inner)
    pts = (rs[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    weights = (wr[:, None] * rs[:, None] ** (n - 1) * wang[None, :]).reshape(-1)
    return pts, weights


def face_disc_rule(face_axis: int, r_outer: float, spec: QuadratureSpec,
                   region: str = HALF, breaks=(),
                   n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Rule on the boundary face {x_axis = 0} inside |x| <= r_outer.

    The half-space face x_1 = 0 is a full disc; quarter-space faces are
    half-discs.  Weights carry the Euclidean area element.
    """
    if n != 3:
        raise NotImplementedError("quadrature rules are implemented for n = 3")
    if face_axis == 0:
        p0, p1 = (0.0, np.pi) if region == QUARTER else (0.0, 2.0 * np.pi)

        def embed(r, ph):
            return np.stack([np.zeros_like(r), r * np.cos(ph), r * np.sin(ph)],
                            axis=-1)
    elif face_axis == n - 1:
        p0, p1 = -np.pi / 2.0, np.pi / 2.0

        def embed(r, ph):
            return np.stack([r * np.cos(ph), r * np.sin(ph), np.zeros_like(r)],
                            axis=-1)
    else:
        raise ValueError(f"no boundary face on axis {face_axis}")
    ph, wph = _gauss(p0, p1, spec.n_phi)
    rs, wr = radial_segments(r_outer, breaks, spec.n_r)
    R, PH = np.meshgrid(rs, ph, indexing="ij")
    WR, WPH = np.meshgrid(wr, wph, indexing="ij")
    pts = embed(R.ravel(), PH.ravel())
    weights = (R * WR * WPH).ravel()
    return pts, weights


def fixed_order_sum(values: np.ndarray, weights: np.ndarray) -> float:
    """Weighted reduction in a fixed (array) order for reproducibility."""
    return float(np.dot(np.asarray(values, dtype=float),
                        np.asarray(weights, dtype=float)))
