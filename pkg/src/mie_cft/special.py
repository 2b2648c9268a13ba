"""Scalar special functions: complete elliptic integral, Dedekind eta, winding sums.

The winding sum ``T(q, g, a) = sum_w q**(g*(w+a)**2)`` is the displaced theta
series that carries all the winding-sector physics.  Everything downstream works
with ``log q`` rather than ``q`` so that nomes like ``exp(-300)`` stay usable.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Q_SWITCH",
    "agm",
    "elliptic_k",
    "dedekind_eta",
    "log_dedekind_eta",
    "winding_sum",
    "log_winding_sum",
    "log_winding_excess",
    "log_eta_product",
]

# direct series below, Poisson-resummed series above
Q_SWITCH = math.exp(-math.pi)
LOG_Q_SWITCH = -math.pi
# modular transform of eta above this nome
_ETA_MODULAR_Q = 0.99
_TAIL = 1e-16


def _check_nome(q: float) -> None:
    if not (0.0 <= q < 1.0) or math.isnan(q):
        raise ValueError(f"nome must lie in [0, 1), got {q!r}")


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two positive numbers."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("agm needs positive arguments")
    for _ in range(64):
        a_next = 0.5 * (a + b)
        b = math.sqrt(a * b)
        if abs(a_next - b) <= 1e-16 * a_next:
            return 0.5 * (a_next + b)
        a = a_next
    return a


def elliptic_k(k: float) -> float:
    """Complete elliptic integral of the first kind, K(k), with k the modulus.

    Uses K(k) = pi / (2 agm(1, k')) with k' = sqrt((1-k)(1+k)).
    """
    if not (0.0 <= k < 1.0) or math.isnan(k):
        raise ValueError(f"elliptic modulus must lie in [0, 1), got {k!r}")
    kp = math.sqrt((1.0 - k) * (1.0 + k))
    return math.pi / (2.0 * agm(1.0, kp))


def log_eta_product(log_q: float) -> float:
    """sum_{s>=1} log(1 - q**s), i.e. log eta(q) without the q**(1/24) prefactor."""
    if not log_q < 0.0:
        raise ValueError("log_q must be negative")
    if math.isinf(log_q):
        return 0.0
    if log_q > math.log(_ETA_MODULAR_Q):
        t = -log_q / (2.0 * math.pi)
        return log_dedekind_eta(-2.0 * math.pi / t) - 0.5 * math.log(t) - log_q / 24.0
    # smallest s with q**s < 1e-16
    n_fac = max(1, math.ceil(math.log(_TAIL) / log_q))
    s = np.arange(1, n_fac + 1)
    return float(np.sum(np.log1p(-np.exp(s * log_q))))


def log_dedekind_eta(log_q: float) -> float:
    """log eta(q) given log q < 0.

    For q > 0.99 the modular identity eta(i t) = eta(i/t) / sqrt(t), with
    q = exp(-2 pi t), trades the slowly converging product for a tiny dual nome.
    """
    if not log_q < 0.0:
        raise ValueError("log_q must be negative")
    if math.isinf(log_q):
        return -math.inf
    if log_q > math.log(_ETA_MODULAR_Q):
        t = -log_q / (2.0 * math.pi)
        return log_dedekind_eta(-2.0 * math.pi / t) - 0.5 * math.log(t)
    return log_q / 24.0 + log_eta_product(log_q)


def dedekind_eta(q: float) -> float:
    """Dedekind eta q**(1/24) * prod_{s>=1} (1 - q**s); eta(0) = 0."""
    _check_nome(q)
    if q == 0.0:
        return 0.0
    return math.exp(log_dedekind_eta(math.log(q)))


def _direct_terms(log_q: float, g: float) -> int:
    # |w| + 1/2 with g*|log q|*w^2 > 40 keeps dropped terms below e^-40
    return int(math.ceil(math.sqrt(40.0 / (g * -log_q)))) + 1


def _log_direct_parts(log_q: float, g: float, a: np.ndarray):
    """Split log T = g log_q b^2 + log1p(rest), b = a - round(a), so tiny corrections keep full precision."""
    b = a - np.round(a)
    wmax = _direct_terms(log_q, g)
    j = np.arange(1, wmax + 1, dtype=float)[:, None]
    # exponents relative to the dominant j = 0 term: g log_q ((j + b)^2 - b^2)
    rel = g * log_q * np.concatenate([j * (j + 2.0 * b), j * (j - 2.0 * b)])
    return g * log_q * b**2, np.log1p(np.sum(np.exp(rel), axis=0)), b


def _log_direct(log_q: float, g: float, a: np.ndarray) -> np.ndarray:
    lead, rest, _ = _log_direct_parts(log_q, g, a)
    return lead + rest


def _log_poisson(log_q: float, g: float, a: np.ndarray) -> np.ndarray:
    lam = -g * log_q
    mmax = int(math.ceil(math.sqrt(40.0 * lam) / math.pi)) + 1
    m = np.arange(1, mmax + 1, dtype=float)[:, None]
    series = 1.0 + 2.0 * np.sum(
        np.exp(-(math.pi**2) * m**2 / lam) * np.cos(2.0 * math.pi * m * a), axis=0
    )
    return 0.5 * math.log(math.pi / lam) + np.log(series)


def log_winding_sum(log_q: float, g: float, a, branch: str | None = None):
    """log T(q, g, a) for an array (or scalar) of displacements ``a``.

    ``branch`` forces ``"direct"`` or ``"poisson"``; by default the direct series
    is used for q <= Q_SWITCH and the Poisson-resummed one above it.
    """
    if g <= 0.0:
        raise ValueError("g must be positive")
    if not log_q < 0.0:
        raise ValueError("log_q must be negative (q < 1)")
    a_arr = np.asarray(a, dtype=float)
    flat = np.atleast_1d(a_arr).ravel()
    if branch is None:
        branch = "direct" if log_q <= LOG_Q_SWITCH else "poisson"
    if branch == "direct":
        out = _log_direct(log_q, g, flat)
    elif branch == "poisson":
        out = _log_poisson(log_q, g, flat)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    out = out.reshape(a_arr.shape)
    return float(out) if out.ndim == 0 else out


def winding_sum(q: float, g: float, a: float) -> float:
    """T(q, g, a) = sum over integers w of q**(g (w + a)**2)."""
    _check_nome(q)
    if g <= 0.0:
        raise ValueError("g must be positive")
    if q == 0.0:
        return 1.0 if float(a).is_integer() else 0.0
    return math.exp(log_winding_sum(math.log(q), g, a))


def log_winding_excess(log_q: float, g: float, a):
    """log T(q, g, a) - g log_q a^2 for unreduced displacements ``a``.

    This is the log of T relative to its w = 0 Gaussian term; it is >= 0, and
    near a = 0 it is computed without cancellation.
    """
    a_arr = np.asarray(a, dtype=float)
    a = np.atleast_1d(a_arr).ravel()
    if log_q <= LOG_Q_SWITCH:
        lead, rest, b = _log_direct_parts(log_q, g, a)
        # (b - a)(b + a) is exactly zero in the central cell
        out = g * log_q * (b - a) * (b + a) + rest
    else:
        out = log_winding_sum(log_q, g, a) - g * log_q * a**2
    out = out.reshape(a_arr.shape)
    return float(out) if out.ndim == 0 else out
