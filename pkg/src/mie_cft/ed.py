"""Brute-force state-vector oracle for small periodic XXZ chains (L <= 14).

Basis convention: site j is tensor axis j of a (2,)*L array, with 1 = spin up
= occupied.  H = sum_j sx sx + sy sy + delta sz sz on a ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .gaussian import MeasurementRecord, layout_regions
from .geometry import RingGeometry

__all__ = [
    "MAX_L",
    "SpinState",
    "Branch",
    "luttinger_g",
    "sector_basis",
    "xxz_sector_hamiltonian",
    "xxz_ground_state",
    "measure_sites",
    "region_entropy",
    "branch_entropies",
    "mie_exact",
]

MAX_L = 14
DENSE_MAX_L = 10


@dataclass
class SpinState:
    amplitudes: np.ndarray
    L: int
    energy: float = math.nan

    def __post_init__(self):
        if self.amplitudes.shape != (2**self.L,):
            raise ValueError("amplitude vector must have length 2**L")

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.L)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class Branch:
    record: MeasurementRecord
    state: SpinState
    probability: float


def luttinger_g(delta: float) -> float:
    """g from delta = -cos(pi g), on the gapless line delta in (-1, 1]."""
    if not (-1.0 < delta <= 1.0):
        raise ValueError("delta must lie in (-1, 1]")
    return math.acos(-delta) / math.pi


def sector_basis(L: int) -> np.ndarray:
    """Integer labels of zero-magnetization configurations (bit L-1-j is site j)."""
    states = []
    for ups in combinations(range(L), L // 2):
        states.append(sum(1 << (L - 1 - j) for j in ups))
    return np.array(sorted(states), dtype=np.int64)


def xxz_sector_hamiltonian(L: int, delta: float) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse H restricted to S^z = 0, plus the basis labels."""
    basis = sector_basis(L)
    index = {int(s): i for i, s in enumerate(basis)}
    rows, cols, vals = [], [], []
    bonds = [(j, (j + 1) % L) for j in range(L)]
    for i, s in enumerate(basis):
        s = int(s)
        diag = 0.0
        for j, k in bonds:
            bj = (s >> (L - 1 - j)) & 1
            bk = (s >> (L - 1 - k)) & 1
            diag += delta * (1.0 if bj == bk else -1.0)
            if bj != bk:
                # sx sx + sy sy = 2 (s+ s- + s- s+) flips an antiparallel pair with amplitude 2
                t = s ^ ((1 << (L - 1 - j)) | (1 << (L - 1 - k)))
                rows.append(index[t])
                cols.append(i)
                vals.append(2.0)
        rows.append(i)
        cols.append(i)
        vals.append(diag)
    dim = len(basis)
    H = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    return H, basis


def xxz_ground_state(L: int, delta: float, gap_tol: float = 1e-8) -> SpinState:
    """Ground state of the periodic XXZ ring in the zero-magnetization sector.

    Dense diagonalization for L <= 10, Lanczos (scipy eigsh) above.  Raises if the
    two lowest sector levels are degenerate within ``gap_tol``.
    """
    if L % 2 or L < 2 or L > MAX_L:
        raise ValueError(f"L must be even and at most {MAX_L}")
    if not (-1.0 < delta <= 1.0):
        raise ValueError("delta must lie in (-1, 1]")
    H, basis = xxz_sector_hamiltonian(L, delta)
    if L <= DENSE_MAX_L:
        w, v = np.linalg.eigh(H.toarray())
    else:
        w, v = eigsh(H, k=2, which="SA", tol=1e-13, maxiter=20000)
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    if len(w) > 1 and w[1] - w[0] < gap_tol:
        raise RuntimeError(f"ground state degenerate at L={L}, delta={delta}")
    vec = v[:, 0]
    residual = np.linalg.norm(H @ vec - w[0] * vec)
    if residual > 1e-8:
        raise RuntimeError(f"eigensolver did not converge (residual {residual:.2e})")
    full = np.zeros(2**L)
    full[basis] = vec / np.linalg.norm(vec)
    return SpinState(full, L, float(w[0]))


# measurements

def _project(tensor: np.ndarray, site: int, outcome: int) -> np.ndarray:
    out = np.zeros_like(tensor)
    idx = [slice(None)] * tensor.ndim
    idx[site] = outcome
    out[tuple(idx)] = tensor[tuple(idx)]
    return out


def measure_sites(state: SpinState, region_C, mode: str = "enumerate", seed=None,
                  pattern=None) -> list[Branch]:
    """Apply sigma_z projectors (1 +/- sz)/2 site by site on ``region_C``.

    mode "sample" draws one Born trajectory from ``seed``; "forced" post-selects
    ``pattern``; "enumerate" returns every branch with nonzero probability.
    """
    sites = sorted(region_C)
    if mode == "enumerate":
        if len(sites) > 12:
            raise ValueError("enumeration limited to 12 measured sites")
        patterns = list(product((0, 1), repeat=len(sites)))
    elif mode == "forced":
        if pattern is None or len(pattern) != len(sites):
            raise ValueError("forced mode needs one outcome per measured site")
        patterns = [tuple(int(o) for o in pattern)]
    elif mode == "sample":
        patterns = None
    else:
        raise ValueError(f"unknown mode {mode!r}")

    if patterns is None:
        rng = np.random.default_rng(seed)
        psi = state.tensor
        record = MeasurementRecord()
        for site in sites:
            up = _project(psi, site, 1)
            p1 = float(np.vdot(up, up).real) / float(np.vdot(psi, psi).real)
            outcome = int(rng.random() < p1)
            psi = up if outcome else _project(psi, site, 0)
            record.append(site, outcome, p1 if outcome else 1.0 - p1)
        psi = psi / np.linalg.norm(psi)
        return [Branch(record, SpinState(psi.ravel(), state.L), record.prob)]

    branches = []
    for outs in patterns:
        psi = state.tensor
        record = MeasurementRecord()
        dead = False
        for site, outcome in zip(sites, outs):
            before = float(np.vdot(psi, psi).real)
            psi = _project(psi, site, outcome)
            after = float(np.vdot(psi, psi).real)
            if after < 1e-14 * max(before, 1e-300) or after == 0.0:
                dead = True
                break
            record.append(site, outcome, after / before)
        if dead:
            if mode == "forced":
                raise ValueError("post-selected pattern has vanishing probability")
            continue
        psi = psi / np.linalg.norm(psi)
        branches.append(Branch(record, SpinState(psi.ravel(), state.L), record.prob))
    return branches


# entropies

def _spectrum_entropy(lam: np.ndarray, n: float) -> float:
    lam = lam[lam > 1e-14]
    if n == 1.0:
        return float(-np.sum(lam * np.log(lam)))
    return float(np.log(np.sum(lam**n)) / (1.0 - n))


def region_entropy(state: SpinState, region, n: float) -> float:
    """Renyi-n entropy of the reduced density matrix on ``region`` (any site subset)."""
    region = sorted(region)
    rest = [j for j in range(state.L) if j not in region]
    if not region or not rest:
        return 0.0
    psi = np.transpose(state.tensor, region + rest).reshape(2 ** len(region), -1)
    # Schmidt values: squared singular values of the bipartite amplitude matrix
    lam = np.linalg.svd(psi, compute_uv=False) ** 2
    return _spectrum_entropy(lam / lam.sum(), n)


def branch_entropies(state: SpinState, meas, region, ns) -> tuple[np.ndarray, np.ndarray]:
    """Branch probabilities and entropies of ``region`` for every outcome on ``meas``.

    Vectorized enumeration: returns (probabilities (2^|meas|,), entropies (2^|meas|, len(ns))).
    """
    meas, region = sorted(meas), sorted(region)
    rest = [j for j in range(state.L) if j not in meas and j not in region]
    psi = np.transpose(state.tensor, meas + region + rest).reshape(
        2 ** len(meas), 2 ** len(region), -1
    )
    probs = np.einsum("mab,mab->m", psi.conj(), psi).real
    sv = np.linalg.svd(psi, compute_uv=False) ** 2
    ent = np.zeros((len(probs), len(ns)))
    for m, p in enumerate(probs):
        if p < 1e-14:
            continue
        for i, n in enumerate(ns):
            ent[m, i] = _spectrum_entropy(sv[m] / p, float(n))
    return probs, ent


def mie_exact(L: int, layout: RingGeometry, delta: float, n, state: SpinState | None = None):
    """Exact Born-averaged entropy of A, sum_m p_m S_m(A), by full enumeration of C.

    ``n`` may be a scalar or a sequence of Renyi indices.
    """
    if layout.L != L:
        raise ValueError("layout belongs to a different ring size")
    regions = layout_regions(layout)
    meas = sorted(regions["C1"] + regions["C2"])
    if len(meas) > 12:
        raise ValueError("mie_exact limited to 12 measured sites")
    if state is None:
        state = xxz_ground_state(L, delta)
    ns = np.atleast_1d(np.asarray(n, dtype=float))
    probs, ent = branch_entropies(state, meas, regions["A"], ns)
    out = probs @ ent
    return float(out[0]) if np.ndim(n) == 0 else out
