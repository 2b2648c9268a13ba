"""Closed-form measurement-induced entanglement of a compact free boson.

Conventions: g is the Luttinger parameter, n the Renyi index, zeta the
cross-ratio of the ring layout.  The cylinder height h(zeta) and the nomes
q_n = exp(-2 pi^2 n / h) come from :mod:`mie_cft.geometry`.  Entropies are in
nats throughout.

The winding integral is

    W_{n,k} = sqrt((1 + n k) g / (2 pi h)) * int d delta exp(-g delta^2 / (2h)) T(q_n, g, delta/2pi)^k

i.e. sqrt(1 + n k) times a Gaussian average (variance h/g) of T^k.  Its
k-derivative at k = 0 is n/2 + <log T(q_n)>, and the Born-averaged Renyi MIE is

    MIE^(n) = [W'_n - n W'_1 - log(eta(q_n) / eta(q_1)^n)] / (1 - n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import CylinderData
from .special import log_eta_product, log_winding_excess, log_winding_sum

__all__ = [
    "QuadratureError",
    "TheoryParams",
    "gaussian_average",
    "winding_integral",
    "mean_log_winding",
    "winding_derivative",
    "mie_renyi",
    "mie_von_neumann",
    "mie",
    "mie_forced",
    "asymptotic_exponent",
    "mie_asymptotic",
    "born_weight_density",
    "loglog_fit",
]

# Gauss-Legendre points per period cell: start, cap
GL_START = 32
GL_MAX = 4096
QUAD_TOL = 1e-10
QUAD_RTOL = 1e-10
# rounding floor of a quadrature sum of O(1) terms
QUAD_FLOOR = 1e-15
# half-width of the integration window in standard deviations
TAIL_SIGMAS = 14.0


class QuadratureError(RuntimeError):
    """Quadrature refinement did not settle; ``estimate`` holds the last change."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class TheoryParams:
    g: float
    n: float
    zeta: float

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("Luttinger parameter g must be positive")
        if not self.n > 0:
            raise ValueError("Renyi index n must be positive")
        if not (0.0 < self.zeta < 1.0):
            raise ValueError("cross-ratio must lie in (0, 1)")

    @property
    def cylinder(self) -> CylinderData:
        return CylinderData.from_zeta(self.zeta)


@lru_cache(maxsize=None)
def _legendre(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(n_nodes)


def _cell_rule(variance: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Abscissae and Gaussian-weighted weights on cells [(2m-1) pi, (2m+1) pi]."""
    sigma = math.sqrt(variance)
    m_max = int(math.ceil(TAIL_SIGMAS * sigma / (2.0 * math.pi)))
    centers = 2.0 * math.pi * np.arange(-m_max, m_max + 1, dtype=float)
    x, w = _legendre(n_nodes)
    pts = (centers[:, None] + math.pi * x[None, :]).ravel()
    pdf = np.exp(-0.5 * pts**2 / variance) / math.sqrt(2.0 * math.pi * variance)
    return pts, np.tile(math.pi * w, centers.size) * pdf


def gaussian_average(f, variance: float, tol: float = QUAD_TOL, rtol: float = QUAD_RTOL,
                     n_start: int = GL_START, n_max: int = GL_MAX) -> float:
    """<f(delta)> for delta ~ N(0, variance), f periodic-ish with cusps at odd multiples of pi.

    Composite Gauss-Legendre on 2 pi cells centred on multiples of 2 pi, so that
    the near-kinks of log T at delta = (2m+1) pi sit on cell edges where the
    nodes cluster.  The node count per cell doubles until two rules differ by less
    than ``min(tol, max(rtol |value|, 1e-15))``.  ``f`` takes a numpy array.
    """
    pts, wts = _cell_rule(variance, n_start)
    prev = float(np.dot(wts, f(pts)))
    n_nodes = n_start
    change = math.inf
    while n_nodes < n_max:
        n_nodes *= 2
        pts, wts = _cell_rule(variance, n_nodes)
        cur = float(np.dot(wts, f(pts)))
        change = abs(cur - prev)
        if change < min(tol, max(rtol * abs(cur), QUAD_FLOOR)):
            return cur
        prev = cur
    raise QuadratureError(
        f"quadrature did not converge with {n_nodes} nodes per cell (last change {change:.3e})",
        change,
    )


def _log_t(zeta_h: float, g: float, n: float):
    log_q = -2.0 * math.pi**2 * n / zeta_h
    return lambda delta: log_winding_sum(log_q, g, delta / (2.0 * math.pi))


def winding_integral(p: TheoryParams, k: float) -> float:
    """W_{n,k}(zeta, g).

    k may be slightly negative (down to Q = 1 + n k > 0) so that central
    differences around k = 0 are available; the formula is analytic there.
    """
    q_total = 1.0 + p.n * k
    if q_total <= 0.0:
        raise ValueError("need 1 + n k > 0")
    h = p.cylinder.h
    log_t = _log_t(h, p.g, p.n)
    if k == 0.0:
        return math.sqrt(q_total)
    avg = gaussian_average(lambda d: np.exp(k * log_t(d)), h / p.g)
    return math.sqrt(q_total) * avg


def _mean_log_excess(h: float, g: float, n: float) -> float:
    # <log T(q_n) + n g delta^2 / (2h)>: the w = 0 Gaussian term averages to -n/2 exactly
    log_q = -2.0 * math.pi**2 * n / h
    return gaussian_average(
        lambda d: log_winding_excess(log_q, g, d / (2.0 * math.pi)), h / g
    )


def mean_log_winding(zeta: float, g: float, n: float) -> float:
    """Gaussian average (variance h/g) of log T(q_n, g, delta / 2 pi)."""
    h = CylinderData.from_zeta(zeta).h
    return -0.5 * n + _mean_log_excess(h, g, n)


def winding_derivative(p: TheoryParams) -> float:
    """W'_n = d/dk W_{n,k} at k = 0 = n/2 + <log T(q_n)>."""
    return _mean_log_excess(p.cylinder.h, p.g, p.n)


def _log_eta_ratio(h: float, n: float) -> float:
    # log(eta(q_n) / eta(q_1)^n); the q^(1/24) prefactors cancel identically
    lq1 = -2.0 * math.pi**2 / h
    return log_eta_product(n * lq1) - n * log_eta_product(lq1)


def _numerator(zeta: float, g: float, n: float) -> float:
    h = CylinderData.from_zeta(zeta).h
    return _mean_log_excess(h, g, n) - n * _mean_log_excess(h, g, 1.0) - _log_eta_ratio(h, n)


def _forced_numerator(zeta: float, g: float, n: float) -> float:
    h = CylinderData.from_zeta(zeta).h
    lq1 = -2.0 * math.pi**2 / h

    def log_zd(lq):
        return log_winding_excess(lq, g, 0.0) - log_eta_product(lq)

    return log_zd(n * lq1) - n * log_zd(lq1)


def mie_renyi(p: TheoryParams) -> float:
    """Born-averaged Renyi MIE for n != 1."""
    if p.n == 1.0:
        raise ValueError("n = 1 is a limit; use mie_von_neumann")
    return _numerator(p.zeta, p.g, p.n) / (1.0 - p.n)


def _limit_n_to_one(numerator, eps=(1e-2, 5e-3)):
    """-d/dn numerator at n = 1 by Richardson-extrapolated central differences."""
    def central(e):
        return (numerator(1.0 + e) - numerator(1.0 - e)) / (2.0 * e)

    big, small = eps
    d_big, d_small = central(big), central(small)
    ratio = (big / small) ** 2
    extrapolated = (ratio * d_small - d_big) / (ratio - 1.0)
    return -extrapolated, abs(extrapolated - d_small)


def mie_von_neumann(zeta: float, g: float, full_output: bool = False):
    """n -> 1 limit of the Born-averaged MIE.

    With ``full_output`` also returns the spread between the extrapolated value
    and the finest central difference, as an error estimate.
    """
    TheoryParams(g, 1.0, zeta)
    value, err = _limit_n_to_one(lambda n: _numerator(zeta, g, n))
    return (value, err) if full_output else value


def mie(zeta: float, g: float, n: float) -> float:
    """Born-averaged MIE at any n > 0, routing n = 1 to the limit."""
    if n == 1.0:
        return mie_von_neumann(zeta, g)
    return mie_renyi(TheoryParams(g, n, zeta))


def mie_forced(p: TheoryParams) -> float:
    """MIE_F for post-selection onto the Dirichlet (Neel) outcome.

    Z_D(q) = T(q, g, 0) / eta(q) is the Dirichlet cylinder partition function;
    MIE_F = log(Z_D(q_n) / Z_D(q_1)^n) / (1 - n), with n = 1 taken as a limit.
    """
    if p.n == 1.0:
        value, _ = _limit_n_to_one(lambda n: _forced_numerator(p.zeta, p.g, n))
        return value
    return _forced_numerator(p.zeta, p.g, p.n) / (1.0 - p.n)


def asymptotic_exponent(n: float, g: float, forced: bool = False) -> float:
    """Leading small-zeta power of MIE^(n) (or of MIE_F^(n) when ``forced``)."""
    if forced:
        return 2.0 * n * g if n < 1.0 else 2.0 * g
    return 2.0 * n * (1.0 - n) * g if n < 0.5 else 0.5 * g


def mie_asymptotic(p: TheoryParams) -> tuple[float, str]:
    """Leading small-zeta form of the Born-averaged MIE, up to an overall constant.

    Returns (value, regime) with regime "sub-half" (zeta^(2n(1-n)g)) or
    "super-half" (zeta^(g/2) / sqrt(log(1/zeta))).
    """
    if p.zeta >= 0.05:
        raise ValueError("asymptotic form only applies for zeta < 0.05")
    expo = asymptotic_exponent(p.n, p.g)
    if p.n < 0.5:
        return p.zeta**expo, "sub-half"
    return p.zeta**expo / math.sqrt(math.log(1.0 / p.zeta)), "super-half"


def born_weight_density(zeta: float, g: float, delta_phi):
    """Born weight of the boundary-value mismatch delta_phi in [0, 2 pi).

    This is the Gaussian factor of the winding integral folded onto one period;
    the fold is itself the winding sum, sqrt(g / (2 pi h)) T(q_1, g, delta/2pi),
    i.e. the partition function of the cylinder with Dirichlet values differing
    by delta_phi.
    """
    d = np.asarray(delta_phi, dtype=float)
    if np.any((d < 0.0) | (d >= 2.0 * math.pi)):
        raise ValueError("delta_phi must lie in [0, 2 pi)")
    h = CylinderData.from_zeta(zeta).h
    log_q1 = -2.0 * math.pi**2 / h
    dens = math.sqrt(g / (2.0 * math.pi * h)) * np.exp(
        log_winding_sum(log_q1, g, d / (2.0 * math.pi))
    )
    return float(dens) if dens.ndim == 0 else dens


def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line through (log x, log y); returns (slope, intercept, residual norm)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    design = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ coef
    return float(coef[0]), float(coef[1]), float(np.linalg.norm(resid))
