"""Free-fermion (XX chain, Delta = 0) simulation of Born-rule charge measurements.

The state is carried by its one-body correlation matrix C_jk = <c_j^dag c_k>.
Measuring n_j projects onto a Gaussian state again, so a whole measurement
trajectory is a sequence of rank-one updates, and entropies come from the
spectrum of the restricted block of C.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product

import numba
import numpy as np

from .geometry import RingGeometry

__all__ = [
    "FORBIDDEN_P",
    "EIG_CLAMP",
    "ForbiddenOutcomeError",
    "MeasurementRecord",
    "MieEstimate",
    "fermi_sea",
    "xx_ground_state",
    "mode_energy",
    "born_probability",
    "project_occupation",
    "renyi_entropy",
    "entropies_from_spectrum",
    "sample_trajectory",
    "post_select",
    "neel_pattern",
    "layout_regions",
    "measured_sites",
    "enumerate_mie",
    "estimate_mie",
    "estimate_mie_multi",
    "forced_mie",
    "mutual_information",
    "fermionic_mutual_information",
    "spin_two_block_spectrum",
]

FORBIDDEN_P = 1e-14
EIG_CLAMP = 1e-12


class ForbiddenOutcomeError(ValueError):
    """Requested a measurement outcome whose Born probability is (numerically) zero."""


@dataclass
class MeasurementRecord:
    sites: list[int] = field(default_factory=list)
    outcomes: list[int] = field(default_factory=list)
    log_prob: float = 0.0

    def append(self, site: int, outcome: int, prob: float) -> None:
        if site in self.sites:
            raise ValueError(f"site {site} already measured")
        self.sites.append(site)
        self.outcomes.append(outcome)
        self.log_prob += math.log(prob)

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)


@dataclass(frozen=True)
class MieEstimate:
    mean: float
    stderr: float
    n_traj: int
    renyi_n: float


# ground state

def fermi_sea(L: int, antiperiodic: bool) -> tuple[np.ndarray, float, bool]:
    """Fill the L/2 lowest modes of 2 sum_j (c_j^dag c_{j+1} + h.c.) with (anti)periodic boundaries.

    Returns (C, energy, degenerate) where ``degenerate`` flags a partially
    filled degenerate Fermi level.
    """
    shift = 0.5 if antiperiodic else 0.0
    k = 2.0 * math.pi * (np.arange(L) + shift) / L
    eps = 4.0 * np.cos(k)
    order = np.argsort(eps, kind="stable")
    n_f = L // 2
    occ = order[:n_f]
    degenerate = abs(eps[order[n_f - 1]] - eps[order[n_f]]) < 1e-10
    j = np.arange(L)
    dj = j[:, None] - j[None, :]
    # C_jl = (1/L) sum_occ exp(-i k (j - l)); occupied set is symmetric under k -> -k
    C = np.cos(k[occ][None, None, :] * dj[:, :, None]).sum(axis=2) / L
    return C, float(eps[occ].sum()), bool(degenerate)


def xx_ground_state(L: int) -> np.ndarray:
    """Half-filled ground-state correlation matrix of the periodic XX chain.

    The Jordan-Wigner boundary sector is picked by energy among the sectors with
    a non-degenerate Fermi level.
    """
    if L % 2 or L < 8:
        raise ValueError("L must be even and at least 8")
    best = None
    for antiperiodic in (False, True):
        C, energy, degenerate = fermi_sea(L, antiperiodic)
        if degenerate:
            continue
        if best is None or energy < best[1]:
            best = (C, energy)
    if best is None:
        raise RuntimeError(f"no boundary sector with a non-degenerate Fermi level at L={L}")
    return best[0]


def mode_energy(L: int) -> float:
    """Ground-state energy of the selected free-fermion sector."""
    energies = [e for C, e, deg in (fermi_sea(L, False), fermi_sea(L, True)) if not deg]
    return min(energies)


# single measurements

def born_probability(C: np.ndarray, site: int) -> float:
    """p(n_site = 1)."""
    return min(max(float(np.real(C[site, site])), 0.0), 1.0)


def project_occupation(C: np.ndarray, site: int, outcome: int) -> np.ndarray:
    """Correlation matrix after projecting n_site onto ``outcome`` (0 or 1)."""
    p1 = born_probability(C, site)
    p = p1 if outcome == 1 else 1.0 - p1
    if p < FORBIDDEN_P:
        raise ForbiddenOutcomeError(f"outcome {outcome} at site {site} has probability {p:.3e}")
    # outcome 1: C - C e e^T C / C_jj + e e^T; outcome 0: same on the hole matrix 1 - C
    M = C if outcome == 1 else np.eye(C.shape[0]) - C
    col = M[:, site].copy()
    new = M - np.outer(col, col.conj()) / M[site, site]
    new[site, site] = 1.0
    if outcome == 0:
        new = np.eye(C.shape[0]) - new
    return 0.5 * (new + new.conj().T)


# entropies

def entropies_from_spectrum(nu: np.ndarray, ns) -> np.ndarray:
    """S_n for each n in ``ns`` from correlation-matrix eigenvalues ``nu``."""
    nu = np.asarray(nu, dtype=float)
    # modes within EIG_CLAMP of 0 or 1 are pure and contribute nothing
    nu = nu[(nu > EIG_CLAMP) & (nu < 1.0 - EIG_CLAMP)]
    out = np.empty(len(ns))
    for i, n in enumerate(ns):
        if n == 1.0:
            out[i] = -np.sum(nu * np.log(nu) + (1.0 - nu) * np.log1p(-nu))
        else:
            out[i] = np.sum(np.log(nu**n + (1.0 - nu) ** n)) / (1.0 - n)
    return out


def renyi_entropy(C: np.ndarray, region, n: float) -> float:
    """Renyi-n (n = 1: von Neumann) entropy of the sites in ``region``, in nats."""
    idx = np.asarray(sorted(region), dtype=int)
    if idx.size == 0:
        raise ValueError("region must be non-empty")
    nu = np.linalg.eigvalsh(C[np.ix_(idx, idx)])
    return float(entropies_from_spectrum(nu, [n])[0])


def fermionic_mutual_information(C: np.ndarray, A, B, n: float) -> float:
    """I_n(A:B) = S_n(A) + S_n(B) - S_n(A u B) of the Jordan-Wigner fermions.

    Equals the spin-chain value only when A u B is one contiguous block; see
    :func:`mutual_information` for the spin chain.
    """
    A, B = set(A), set(B)
    if A & B:
        raise ValueError("A and B must be disjoint")
    if not A or not B:
        return 0.0
    return renyi_entropy(C, A, n) + renyi_entropy(C, B, n) - renyi_entropy(C, A | B, n)


# trajectories (reference path: full-matrix updates)

def sample_trajectory(C: np.ndarray, region_C, rng_seed) -> tuple[MeasurementRecord, np.ndarray]:
    """Born-sample the sites of ``region_C`` left to right."""
    rng = np.random.default_rng(rng_seed)
    record = MeasurementRecord()
    for site in sorted(region_C):
        p1 = born_probability(C, site)
        outcome = int(rng.random() < p1)
        record.append(site, outcome, p1 if outcome else 1.0 - p1)
        C = project_occupation(C, site, outcome)
    return record, C


def post_select(C: np.ndarray, sites, outcomes) -> tuple[MeasurementRecord, np.ndarray]:
    """Force the given outcomes in the given order."""
    record = MeasurementRecord()
    for site, outcome in zip(sites, outcomes):
        p1 = born_probability(C, site)
        p = p1 if outcome else 1.0 - p1
        C = project_occupation(C, site, outcome)
        record.append(site, int(outcome), p)
    return record, C


def neel_pattern(sites) -> list[int]:
    """Antiferromagnetic outcomes: up (occupied) on even sites, down on odd sites."""
    return [1 if s % 2 == 0 else 0 for s in sites]


# layouts

def _sites_in(L: int, lo: float, hi: float) -> list[int]:
    # integer sites strictly inside the half-integer interval (lo, hi), wrapped onto the ring
    first = math.floor(lo) + 1
    last = math.ceil(hi) - 1
    return [s % L for s in range(first, last + 1)]


def layout_regions(geom: RingGeometry) -> dict[str, list[int]]:
    """Site sets A, C1, B, C2 for a layout built with the bond-midpoint convention."""
    regions = {
        "A": _sites_in(geom.L, geom.x1, geom.x2),
        "C1": _sites_in(geom.L, geom.x2, geom.x3),
        "B": _sites_in(geom.L, geom.x3, geom.x4),
        "C2": _sites_in(geom.L, geom.x4, geom.x1 + geom.L),
    }
    total = sum(len(v) for v in regions.values())
    if total != geom.L or len(set().union(*map(set, regions.values()))) != geom.L:
        raise ValueError("layout endpoints must sit on bond midpoints and tile the ring")
    return regions


def measured_sites(geom: RingGeometry) -> list[int]:
    r = layout_regions(geom)
    return sorted(r["C1"] + r["C2"])


# fast trajectory kernel

@numba.njit(cache=True, nogil=True)
def _eliminate(M, n_meas, uniforms, forced):
    """Sequential projective measurement of the first ``n_meas`` modes of M, in place.

    Each step is a Schur complement of the pivot: C' = C - C_rj C_js / (C_jj - (1 - outcome)),
    applied only to the lower triangle of the trailing block.  Outcomes are drawn from
    ``uniforms`` unless ``forced`` holds 0/1 values.  Returns the log probability, or
    +inf if a forced outcome is forbidden.
    """
    dim = M.shape[0]
    log_p = 0.0
    for j in range(n_meas):
        p1 = M[j, j]
        if p1 < 0.0:
            p1 = 0.0
        elif p1 > 1.0:
            p1 = 1.0
        if forced[j] >= 0:
            outcome = forced[j]
        else:
            outcome = 1 if uniforms[j] < p1 else 0
        p = p1 if outcome == 1 else 1.0 - p1
        if p < 1e-14:
            return np.inf
        log_p += np.log(p)
        d = M[j, j] - (1.0 - outcome)
        for r in range(j + 1, dim):
            f = M[r, j] / d
            if f != 0.0:
                for s in range(j + 1, r + 1):
                    M[r, s] -= f * M[s, j]
    return log_p


def _restricted(C: np.ndarray, meas: list[int], region: list[int]) -> np.ndarray:
    order = np.asarray(list(meas) + list(region), dtype=int)
    return np.ascontiguousarray(C[np.ix_(order, order)], dtype=np.float64)


def _block_spectrum(M: np.ndarray, n_meas: int) -> np.ndarray:
    block = M[n_meas:, n_meas:]
    return np.linalg.eigvalsh(block, UPLO="L")


def _seed_words(seed) -> list[int]:
    return [int(s) for s in np.atleast_1d(seed)]


def _traj_uniforms(seed, index: int, n_meas: int) -> np.ndarray:
    return np.random.default_rng(_seed_words(seed) + [index]).random(n_meas)


def _run_chunk(base, n_meas, ns, seed, indices):
    no_force = np.full(n_meas, -1, dtype=np.int64)
    out = np.empty((len(indices), len(ns)))
    for row, t in enumerate(indices):
        M = base.copy()
        _eliminate(M, n_meas, _traj_uniforms(seed, t, n_meas), no_force)
        out[row] = entropies_from_spectrum(_block_spectrum(M, n_meas), ns)
    return out


def trajectory_entropies(C: np.ndarray, meas, region, ns, n_traj: int, seed: int,
                         threads: int = 1) -> np.ndarray:
    """Per-trajectory entropies of ``region`` after Born-sampling ``meas`` (shape n_traj x len(ns)).

    Trajectory t draws its outcomes from a generator seeded with (*seed, t), so the
    result does not depend on ``threads``.  ``seed`` is an int or a tuple of ints.
    """
    meas = sorted(meas)
    base = _restricted(np.real(C), meas, sorted(region))
    ns = [float(n) for n in ns]
    if not meas:
        s = entropies_from_spectrum(np.linalg.eigvalsh(base), ns)
        return np.tile(s, (n_traj, 1))
    chunks = np.array_split(np.arange(n_traj), max(1, threads) * 4)
    chunks = [c for c in chunks if c.size]
    if threads <= 1:
        parts = [_run_chunk(base, len(meas), ns, seed, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(base, len(meas), ns, seed, c), chunks))
    return np.vstack(parts)


def estimate_mie_multi(L: int, layout: RingGeometry, ns, n_traj: int, seed: int,
                       threads: int = 1, C: np.ndarray | None = None) -> list[MieEstimate]:
    """Monte Carlo Born-averaged entropies of A for each Renyi index in ``ns``."""
    if layout.L != L:
        raise ValueError("layout belongs to a different ring size")
    a, c1, b, c2 = layout.lengths
    if a != b or c1 != c2:
        raise ValueError("estimate_mie expects an antipodal symmetric layout")
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    if C is None:
        C = xx_ground_state(L)
    regions = layout_regions(layout)
    meas = sorted(regions["C1"] + regions["C2"])
    S = trajectory_entropies(C, meas, regions["A"], ns, n_traj, seed, threads)
    out = []
    for i, n in enumerate(ns):
        col = S[:, i]
        stderr = float(col.std(ddof=1) / math.sqrt(n_traj)) if n_traj > 1 and meas else 0.0
        out.append(MieEstimate(float(col.mean()), stderr, n_traj, float(n)))
    return out


def estimate_mie(L: int, layout: RingGeometry, n: float, n_traj: int, seed: int,
                 threads: int = 1) -> MieEstimate:
    return estimate_mie_multi(L, layout, [n], n_traj, seed, threads)[0]


def forced_mie(C: np.ndarray, meas, region, ns, outcomes=None) -> np.ndarray:
    """Entropies of ``region`` after post-selecting ``outcomes`` (default: Neel) on ``meas``."""
    meas = sorted(meas)
    if outcomes is None:
        outcomes = neel_pattern(meas)
    M = _restricted(np.real(C), meas, sorted(region))
    forced = np.asarray(outcomes, dtype=np.int64)
    log_p = _eliminate(M, len(meas), np.zeros(len(meas)), forced)
    if not np.isfinite(log_p):
        raise ForbiddenOutcomeError("post-selected pattern has vanishing probability")
    return entropies_from_spectrum(_block_spectrum(M, len(meas)), [float(n) for n in ns])


def enumerate_mie(C: np.ndarray, meas, region, ns) -> tuple[np.ndarray, float]:
    """Exact Born average of the entropies of ``region`` over all 2^|meas| outcomes.

    Returns (entropies per n, total probability of the enumerated branches).
    """
    meas = sorted(meas)
    if len(meas) > 20:
        raise ValueError("exhaustive enumeration limited to 20 measured sites")
    base = _restricted(np.real(C), meas, sorted(region))
    ns = [float(n) for n in ns]
    acc = np.zeros(len(ns))
    total = 0.0
    for bits in product((0, 1), repeat=len(meas)):
        M = base.copy()
        log_p = _eliminate(M, len(meas), np.zeros(len(meas)), np.asarray(bits, dtype=np.int64))
        if not np.isfinite(log_p):
            continue
        p = math.exp(log_p)
        total += p
        acc += p * entropies_from_spectrum(_block_spectrum(M, len(meas)), ns)
    return acc, total


# spin-chain entropy of two disjoint blocks

MAX_SPIN_SITES = 12
_COND_MAX = 1e12


def _minor_block(M: np.ndarray, configs: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Matrix of minors det(M[x, y]) over particle configurations x, y of equal size."""
    n_conf, n_part = configs.shape
    if n_part == 0:
        return np.ones((1, 1))
    out = np.empty((n_conf, n_conf))
    for start in range(0, n_conf, chunk):
        rows = M[configs[start:start + chunk]]  # (k, N, m)
        sub = np.moveaxis(np.take(rows, configs, axis=2), 2, 1)  # (k, K, N, N)
        out[start:start + chunk] = np.linalg.det(sub)
    return out


def _gaussian_fock_blocks(Z: np.ndarray, m: int):
    """Number-sector blocks of a Gaussian operator on the first ``m`` modes of ``Z``.

    For a state with correlation G on m modes, Z = 1 - G and the operator is
    rho[x, y] = det(Z) det(M[x, y]) with M = Z^-1 - 1, for occupation lists x, y
    in ascending site order (the Jordan-Wigner spin basis of the region).  A
    bordered Z folds a string insertion over extra modes into the same form.
    """
    if np.linalg.cond(Z) > _COND_MAX:
        raise ValueError("region holds (numerically) frozen modes; Fock construction is singular")
    M = np.linalg.inv(Z)[:m, :m] - np.eye(m)
    pref = np.linalg.det(Z)
    blocks = []
    for n_part in range(m + 1):
        combos = list(combinations(range(m), n_part))
        configs = np.array(combos, dtype=int).reshape(len(combos), n_part)
        blocks.append((configs, pref * _minor_block(M, configs)))
    return blocks


def _blocks(region) -> list[list[int]]:
    sites = sorted(set(region))
    runs = [[sites[0]]]
    for s in sites[1:]:
        if s == runs[-1][-1] + 1:
            runs[-1].append(s)
        else:
            runs.append([s])
    return runs


def spin_two_block_spectrum(C: np.ndarray, A, B) -> np.ndarray:
    """Eigenvalues of the spin-chain reduced density matrix of A u B.

    A and B are contiguous, non-adjacent blocks of sites in [0, L) (no wrap).
    Between them lies the gap E.  By particle-number conservation only spin
    operators odd in the later block pick up a Jordan-Wigner string, P_E =
    prod_{j in E} (1 - 2 n_j); their expectations come from the Gaussian
    operator tr_rest(rho P_E), encoded by Z = [[1 - C_RR, C_RE], [2 C_ER, 1 - 2 C_EE]].
    """
    first, second = sorted((sorted(A), sorted(B)), key=lambda r: r[0])
    if len(_blocks(first)) != 1 or len(_blocks(second)) != 1:
        raise ValueError("A and B must each be a contiguous block")
    if second[0] <= first[-1] + 1:
        raise ValueError("blocks must be disjoint and separated by at least one site")
    R = first + second
    if len(R) > MAX_SPIN_SITES:
        raise ValueError(f"two-block spin entropy limited to {MAX_SPIN_SITES} sites")
    E = list(range(first[-1] + 1, second[0]))
    C = np.real(C)
    m = len(R)
    C_RE = C[np.ix_(R, E)]
    Z = np.block([
        [np.eye(m) - C[np.ix_(R, R)], C_RE],
        [2.0 * C_RE.T, np.eye(len(E)) - 2.0 * C[np.ix_(E, E)]],
    ])
    plain = _gaussian_fock_blocks(Z[:m, :m], m)
    string = _gaussian_fock_blocks(Z, m)
    eigs = []
    for (configs, rho_plain), (_, rho_string) in zip(plain, string):
        # occupation parity of the second block decides which operator supplies the element
        par = (configs >= len(first)).sum(axis=1) % 2
        block = np.where(par[:, None] == par[None, :], rho_plain, rho_string)
        eigs.append(np.linalg.eigvalsh(0.5 * (block + block.T)))
    return np.concatenate(eigs)


def _is_contiguous_on_ring(sites, L: int) -> bool:
    s = set(sites)
    # a single arc has exactly one site whose left neighbour is missing
    return len(s) == L or sum((j - 1) % L not in s for j in s) == 1


def mutual_information(C: np.ndarray, A, B, n: float) -> float:
    """I_n(A:B) of the spin chain whose Jordan-Wigner fermions have correlation matrix C.

    Single blocks and contiguous unions coincide with the fermionic entropies;
    two separated blocks need the string-corrected construction above.
    """
    A, B = sorted(set(A)), sorted(set(B))
    if set(A) & set(B):
        raise ValueError("A and B must be disjoint")
    if not A or not B:
        return 0.0
    L = C.shape[0]
    for region in (A, B):
        if not _is_contiguous_on_ring(region, L):
            raise ValueError("A and B must be contiguous blocks")
    s_a = renyi_entropy(C, A, n)
    s_b = renyi_entropy(C, B, n)
    if _is_contiguous_on_ring(A + B, L):
        return s_a + s_b - renyi_entropy(C, A + B, n)
    lam = spin_two_block_spectrum(C, A, B)
    return s_a + s_b - float(_density_entropies(lam, [n])[0])


def _density_entropies(lam: np.ndarray, ns) -> np.ndarray:
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    nz = lam[lam > 0.0]
    out = np.empty(len(ns))
    for i, n in enumerate(ns):
        if n == 1.0:
            out[i] = -np.sum(nz * np.log(nz))
        else:
            out[i] = math.log(np.sum(nz**n)) / (1.0 - n)
    return out
