"""Ring layouts, the four-point cross-ratio and the finite-cylinder data h(zeta), q_n."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .special import agm

__all__ = [
    "ZETA_MIN",
    "ZETA_MAX",
    "RingGeometry",
    "CylinderData",
    "cross_ratio",
    "clip_zeta",
    "cylinder_height",
    "nome",
    "log_nome",
    "sites_to_endpoints",
    "antipodal_layout",
]

# the stable AGM form of h(zeta) tolerates far smaller cross-ratios than 1e-12
ZETA_MIN = 1e-200
ZETA_MAX = 1.0 - 1e-12


@dataclass(frozen=True)
class RingGeometry:
    """Two unmeasured intervals A = [x1, x2], B = [x3, x4] on a ring of L sites.

    The measured region is the complement C1 = [x2, x3], C2 = [x4, x1 + L].
    A and B must have positive length; the measured intervals may be empty,
    which describes the unmeasured reference state.
    """

    L: int
    x1: float
    x2: float
    x3: float
    x4: float

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")
        if not (self.x1 < self.x2 <= self.x3 < self.x4 <= self.x1 + self.L):
            raise ValueError(
                "endpoints must be cyclically ordered x1 < x2 <= x3 < x4 <= x1 + L, "
                f"got {(self.x1, self.x2, self.x3, self.x4)} with L={self.L}"
            )

    @property
    def lengths(self) -> tuple[float, float, float, float]:
        """Lengths of (A, C1, B, C2)."""
        return (
            self.x2 - self.x1,
            self.x3 - self.x2,
            self.x4 - self.x3,
            self.x1 + self.L - self.x4,
        )

    def _chord(self, xi: float, xj: float) -> float:
        return self.L / math.pi * math.sin(math.pi * (xj - xi) / self.L)

    @property
    def zeta(self) -> float:
        return cross_ratio(self)


def cross_ratio(geom: RingGeometry) -> float:
    """zeta = w12 w34 / (w13 w24) with chord lengths w_ij = (L/pi) sin(pi x_ij / L)."""
    w12 = geom._chord(geom.x1, geom.x2)
    w34 = geom._chord(geom.x3, geom.x4)
    w13 = geom._chord(geom.x1, geom.x3)
    w24 = geom._chord(geom.x2, geom.x4)
    if min(abs(w12), abs(w34), abs(w13), abs(w24)) < 1e-300:
        raise ValueError("degenerate interval: a chord length vanishes")
    return w12 * w34 / (w13 * w24)


def clip_zeta(zeta: float) -> float:
    return min(max(zeta, ZETA_MIN), ZETA_MAX)


def _moduli(zeta: float) -> tuple[float, float]:
    """k and k' = sqrt(1 - k^2) for k = (1 - s)/(1 + s), s = sqrt(1 - zeta), both cancellation-free."""
    s = math.sqrt(1.0 - zeta)
    k = zeta / (1.0 + s) ** 2
    kp = 2.0 * math.sqrt(s) / (1.0 + s)
    return k, kp


def cylinder_height(zeta: float) -> float:
    """h(zeta) = 2 pi K(k) / K(k'), written as 2 pi agm(1, k) / agm(1, k')."""
    if not (0.0 < zeta < 1.0):
        raise ValueError(f"cross-ratio must lie in (0, 1), got {zeta!r}")
    k, kp = _moduli(zeta)
    return 2.0 * math.pi * agm(1.0, k) / agm(1.0, kp)


def log_nome(h: float, n: float) -> float:
    if h <= 0.0 or n <= 0.0:
        raise ValueError("need h > 0 and n > 0")
    return -2.0 * math.pi**2 * n / h


def nome(h: float, n: float) -> float:
    """q_n = exp(-2 pi^2 n / h)."""
    return math.exp(log_nome(h, n))


@dataclass(frozen=True)
class CylinderData:
    zeta: float
    h: float

    @classmethod
    def from_zeta(cls, zeta: float) -> "CylinderData":
        z = clip_zeta(zeta)
        return cls(zeta=z, h=cylinder_height(z))

    def q(self, n: float) -> float:
        return nome(self.h, n)

    def log_q(self, n: float) -> float:
        return log_nome(self.h, n)


def sites_to_endpoints(start: int, length: int) -> tuple[float, float]:
    """Sites {start, ..., start+length-1} cover the continuum interval [start - 1/2, start + length - 1/2]."""
    return start - 0.5, start + length - 0.5


def antipodal_layout(L: int, measured: int) -> RingGeometry:
    """Symmetric layout: A starts at site 0, then C1, B, C2; |C1| = |C2| = measured, |A| = |B|."""
    if L % 2 or measured < 0 or 2 * measured >= L:
        raise ValueError(f"infeasible antipodal layout L={L}, measured={measured}")
    a = L // 2 - measured
    x1, x2 = sites_to_endpoints(0, a)
    x3, x4 = sites_to_endpoints(a + measured, a)
    return RingGeometry(L, x1, x2, x3, x4)
