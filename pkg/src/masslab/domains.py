"""Truncated half-space and quarter-space computational domains."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HALF_SPACE = "half_space"
QUARTER_SPACE = "quarter_space"


@dataclass(frozen=True)
class Domain:
    """A truncated model domain in R^n.

    half_space  : {x_1 >= 0, |x| <= r_outer}
    quarter_space: {x_1 >= 0, x_n >= 0, |x| <= r_outer}

    r_inner is the reference radius of the interface sphere (the hypersurface
    across which two-piece metrics may be non-smooth), r_outer the truncation
    radius, h the default finite-difference step.
    """

    kind: str
    n: int = 3
    r_inner: float = 2.0
    r_outer: float = 16.0
    h: float = 1.0 / 16.0

    def __post_init__(self) -> None:
        if self.kind not in (HALF_SPACE, QUARTER_SPACE):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.n < 3:
            raise ValueError("dimension must satisfy n >= 3")
        if not (self.h > 0):
            raise ValueError("grid spacing h must be positive")
        if not (1.0 <= self.r_inner < self.r_outer):
            raise ValueError("need 1 <= r_inner < r_outer")

    @property
    def face_axes(self) -> tuple[int, ...]:
        """Coordinate axes carrying a boundary face (x_axis = 0)."""
        if self.kind == HALF_SPACE:
            return (0,)
        return (0, self.n - 1)

    def contains(self, x: np.ndarray, slack: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.n},)")
        if np.linalg.norm(x) > self.r_outer + slack:
            return False
        return all(x[a] >= -slack for a in self.face_axes)

    def require_inside(self, x: np.ndarray) -> None:
        if not self.contains(x):
            raise ValueError(f"point {np.asarray(x)} outside {self.kind} domain")


def half_space(n: int = 3, r_inner: float = 2.0, r_outer: float = 16.0,
               h: float = 1.0 / 16.0) -> Domain:
    return Domain(HALF_SPACE, n, r_inner, r_outer, h)


def quarter_space(n: int = 3, r_inner: float = 2.0, r_outer: float = 16.0,
                  h: float = 1.0 / 16.0) -> Domain:
    return Domain(QUARTER_SPACE, n, r_inner, r_outer, h)
