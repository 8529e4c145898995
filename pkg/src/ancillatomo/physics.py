"""States and observables for the worked examples.

BCS pairing states are fermionic Gaussian states, so reduced density matrices
follow from two-point functions alone.  Everything else here is an operator
builder on a given basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .hamiltonians import HBHParams, annihilation_operator, hofstadter_hops, hopping_operator, lattice_site
from .hilbert import Basis, BasisError, fermion_basis, partial_trace

MAX_GAUSSIAN_SITES = 5


class CorrelationError(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# BCS states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BCSParams:
    lx: int
    ly: int
    mu: float
    delta: float
    pairing: str = "s-wave"

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("gap must be non-negative")
        if self.pairing not in ("s-wave", "d-wave"):
            raise ValueError(f"unknown pairing {self.pairing!r}")

    @property
    def center(self) -> tuple[int, int]:
        return (self.lx // 2, self.ly // 2)


def box_modes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Sine standing waves of an open chain: (wavenumbers, phi[x, mode])."""
    k = np.pi * np.arange(1, n + 1) / (n + 1)
    phi = np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(np.arange(1, n + 1), k))
    return k, phi


def bcs_mode_weights(params: BCSParams) -> tuple[np.ndarray, np.ndarray]:
    """Per mode (kx, ky): v^2 = <n_k sigma> and u v = <c+_k up c+_k down>."""
    kx, _ = box_modes(params.lx)
    ky, _ = box_modes(params.ly)
    kx, ky = np.meshgrid(kx, ky, indexing="ij")
    xi = -2.0 * (np.cos(kx) + np.cos(ky)) - params.mu
    gap = params.delta * (np.ones_like(kx) if params.pairing == "s-wave" else np.cos(kx) - np.cos(ky))
    e = np.sqrt(xi ** 2 + gap ** 2)
    safe = np.where(e > 0, e, 1.0)
    v2 = np.where(e > 0, 0.5 * (1 - xi / safe), (xi < 0).astype(float))
    uv = np.where(e > 0, gap / (2 * safe), 0.0)
    return v2, uv


def bcs_two_point(params: BCSParams, sites: Sequence[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    """G[r, r'] = <c+_{r s} c_{r' s}> and F[r, r'] = <c+_{r up} c+_{r' down}> on ``sites``."""
    _, px = box_modes(params.lx)
    _, py = box_modes(params.ly)
    v2, uv = bcs_mode_weights(params)
    sites = [tuple(s) for s in sites]
    for x, y in sites:
        if not (0 <= x < params.lx and 0 <= y < params.ly):
            raise ValueError(f"site {(x, y)} outside the lattice")
    # wave[r, a, b] = phi_a(x) phi_b(y)
    wave = np.array([np.outer(px[x], py[y]) for x, y in sites]).reshape(len(sites), -1)
    g = (wave * v2.reshape(-1)) @ wave.T
    f = (wave * uv.reshape(-1)) @ wave.T
    return g, f


def mean_filling(params: BCSParams) -> float:
    """Average particle number per site, both spins."""
    v2, _ = bcs_mode_weights(params)
    return float(2 * v2.sum() / (params.lx * params.ly))


def bcs_pair_correlator(params: BCSParams, i, j, k, l) -> float:
    """<c+_{i up} c+_{j down} c_{k up} c_{l down}> by Wick's theorem."""
    g, f = bcs_two_point(params, [i, j, k, l])
    return float(-f[0, 1] * f[2, 3] - g[0, 2] * g[1, 3])


def _mode_index(basis: Basis, site: int, spin: int) -> int:
    return basis.modes.index((site, spin))


def majorana_covariance(g: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Gamma[a, b] = (i/2) <[gamma_a, gamma_b]> for modes ordered all up, then all down.

    gamma_{2p} = c_p + c_p^dagger, gamma_{2p+1} = i (c_p^dagger - c_p).
    """
    n = g.shape[0]
    mm = 2 * n
    gm = np.zeros((mm, mm), dtype=complex)   # <c+_p c_q>
    gm[:n, :n] = g
    gm[n:, n:] = g
    km = np.zeros((mm, mm), dtype=complex)   # <c_p c_q>
    km[:n, n:] = -f                          # <c_{r up} c_{r' down}> = -F[r, r']
    km[n:, :n] = f.T                         # <c_{r down} c_{r' up}> = F[r', r]
    q = np.block([[km, np.eye(mm) - gm.T], [gm, km.conj().T]])
    t = np.zeros((2 * mm, 2 * mm), dtype=complex)
    for p in range(mm):
        t[2 * p, p] = 1
        t[2 * p, mm + p] = 1
        t[2 * p + 1, p] = -1j
        t[2 * p + 1, mm + p] = 1j
    corr = t @ q @ t.T
    gamma = 0.5j * (corr - corr.T)
    if np.max(np.abs(gamma.imag)) > 1e-10:
        raise CorrelationError("two-point functions do not describe a Gaussian state")
    return gamma.real


def majorana_operators(basis: Basis) -> list[sp.csr_matrix]:
    ops = []
    for mode in range(basis.n_modes):
        c = annihilation_operator(basis, basis, mode)
        cd = c.conj().T.tocsr()
        ops.append((c + cd).tocsr())
        ops.append((1j * (cd - c)).tocsr())
    return ops


def gaussian_density_matrix(gamma: np.ndarray, basis: Basis, tol: float = 1e-9) -> np.ndarray:
    """rho = prod_k (1 + lambda_k i g'_{2k} g'_{2k+1}) / 2^M from the Majorana covariance."""
    mm = gamma.shape[0]
    if np.max(np.abs(gamma + gamma.T)) > 1e-10:
        raise CorrelationError("covariance is not antisymmetric")
    ev = np.linalg.eigvalsh(1j * gamma)
    if np.max(np.abs(ev)) > 1 + tol:
        raise CorrelationError(f"covariance eigenvalue {np.max(np.abs(ev)):.6f} exceeds one")
    # real Schur form gives the canonical 2x2 blocks [[0, l], [-l, 0]]
    import scipy.linalg as sla
    tform, w = sla.schur(gamma, output="real")
    maj = majorana_operators(basis)
    rotated = [sum(w[a, b] * maj[a] for a in range(mm) if abs(w[a, b]) > 1e-15) for b in range(mm)]
    rho = np.eye(basis.dim, dtype=complex)
    for k in range(mm // 2):
        lam = tform[2 * k, 2 * k + 1]
        x = (1j * (rotated[2 * k] @ rotated[2 * k + 1])).toarray()
        rho = rho @ (np.eye(basis.dim) + lam * x)
    rho /= 2 ** (mm // 2)
    return 0.5 * (rho + rho.conj().T)


def bcs_reduced_density_matrix(params: BCSParams, support: Sequence[tuple[int, int]]) -> tuple[np.ndarray, Basis]:
    """Reduced state on ``support`` in its spinful Fock basis (all particle numbers)."""
    if len(support) > MAX_GAUSSIAN_SITES:
        raise ValueError(f"support limited to {MAX_GAUSSIAN_SITES} sites")
    g, f = bcs_two_point(params, support)
    gamma = majorana_covariance(g, f)
    basis = fermion_basis(len(support), positions=[tuple(s) for s in support])
    return gaussian_density_matrix(gamma, basis), basis


def explicit_bcs_state(params: BCSParams) -> tuple[np.ndarray, Basis]:
    """prod_modes (u + v c+_up c+_down)|0> in real space; a brute-force oracle for tiny lattices."""
    n_sites = params.lx * params.ly
    basis = fermion_basis(n_sites)
    if basis.dim > 2 ** 12:
        raise ValueError("lattice too large for the explicit state")
    _, px = box_modes(params.lx)
    _, py = box_modes(params.ly)
    v2, uv = bcs_mode_weights(params)
    cdag = [annihilation_operator(basis, basis, m).conj().T.tocsr() for m in range(basis.n_modes)]
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index(np.zeros(basis.n_modes, dtype=np.uint8))] = 1.0
    for a in range(params.lx):
        for b in range(params.ly):
            wave = np.array([px[x, a] * py[y, b] for x in range(params.lx) for y in range(params.ly)])
            up = sum(wave[s] * cdag[_mode_index(basis, s, 0)] for s in range(n_sites))
            dn = sum(wave[s] * cdag[_mode_index(basis, s, 1)] for s in range(n_sites))
            v = math.sqrt(v2[a, b])
            u = math.sqrt(1 - v2[a, b])
            # sign of v carries the sign of the gap
            v = math.copysign(v, uv[a, b]) if uv[a, b] != 0 else v
            psi = u * psi + v * (up @ (dn @ psi))
    return psi / np.linalg.norm(psi), basis


def pairing_correlator_operator(i: int, j: int, k: int, l: int, basis: Basis) -> sp.csr_matrix:
    """c+_{i up} c+_{j down} c_{k up} c_{l down} on a fermion basis (site indices of ``basis``)."""
    for s in (i, j, k, l):
        if not 0 <= s < basis.n_sites:
            raise BasisError(f"site {s} outside the basis")
    c = lambda s, spin: annihilation_operator(basis, basis, _mode_index(basis, s, spin))
    op = c(i, 0).conj().T @ c(j, 1).conj().T @ c(k, 0) @ c(l, 1)
    return sp.csr_matrix(op)


def neighbors(site: tuple[int, int]) -> dict[tuple[int, int], int]:
    """Four nearest neighbours with the d-wave filter weight (+1 horizontal, -1 vertical)."""
    x, y = site
    return {(x + 1, y): 1, (x - 1, y): 1, (x, y + 1): -1, (x, y - 1): -1}


def dwave_witness(correlators: dict, center: tuple[int, int] | None = None) -> float:
    """Filtered sum of C(0, j, 1_y, 0) over the four neighbours j of the center."""
    if center is None:
        xs = sorted({j[0] for j in correlators})
        ys = sorted({j[1] for j in correlators})
        center = (xs[len(xs) // 2], ys[len(ys) // 2])
    total = 0.0 + 0.0j
    for j, chi in neighbors(center).items():
        if j not in correlators:
            raise KeyError(f"missing neighbour {j}")
        total += chi * correlators[j]
    return float(np.real(total))


def correlator_support(center: tuple[int, int], j: tuple[int, int]) -> list[tuple[int, int]]:
    """Sites of C(0, j, 1_y, 0) along a connected path j - 0 - 1_y when possible."""
    up = (center[0], center[1] + 1)
    if j == up:
        return [center, up]
    return [j, center, up]


# ---------------------------------------------------------------------------
# Hofstadter-Bose-Hubbard observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MBCNRegions:
    """Three regions on an lx x ly lattice: strip R1 at column x1, block R2, strip R3.

    All regions span rows y0 .. y0 + ly_region - 1.
    """
    lx: int
    ly: int
    x1: int
    l1: int
    l2: int
    ly_region: int
    y0: int = 0
    s: int = 2

    def __post_init__(self):
        if self.x1 + 2 * self.l1 + self.l2 > self.lx or self.y0 + self.ly_region > self.ly:
            raise ValueError("regions do not fit in the lattice")

    def _cols(self, x0: int, w: int) -> list[int]:
        ys = range(self.y0, self.y0 + self.ly_region)
        return [lattice_site(x, y, self.ly) for x in range(x0, x0 + w) for y in ys]

    @property
    def r1(self) -> list[int]:
        return self._cols(self.x1, self.l1)

    @property
    def r2(self) -> list[int]:
        return self._cols(self.x1 + self.l1, self.l2)

    @property
    def r3(self) -> list[int]:
        return self._cols(self.x1 + self.l1 + self.l2, self.l1)

    def rest(self) -> list[int]:
        used = set(self.r1) | set(self.r2) | set(self.r3)
        return [s for s in range(self.lx * self.ly) if s not in used]

    def row(self, site: int) -> int:
        return site % self.ly - self.y0


def polarization_phase(basis: Basis, sites: Sequence[int], regions: MBCNRegions, power: int = 1,
                       lattice_sites: Sequence[int] | None = None) -> np.ndarray:
    """Diagonal of V^power on ``sites`` (listed in ``basis`` numbering) with rows counted from the region bottom.

    ``lattice_sites`` gives the lattice position of each entry of ``sites``
    when ``basis`` is a patch basis; by default the two numberings agree.
    """
    occ = basis.configs[:, list(sites)].astype(float)
    where = sites if lattice_sites is None else lattice_sites
    rows = np.array([regions.row(s) for s in where], dtype=float)
    return np.exp(1j * power * 2 * np.pi / regions.ly_region * (occ @ rows))


def region_swap_permutation(basis: Basis, first: Sequence[int], second: Sequence[int]) -> np.ndarray:
    """Index map of the site-wise exchange first[i] <-> second[i]."""
    if len(first) != len(second):
        raise ValueError("regions are not congruent")
    cfg = basis.configs.copy()
    cfg[:, list(first)], cfg[:, list(second)] = basis.configs[:, list(second)], basis.configs[:, list(first)]
    idx = basis.indices(cfg)
    if np.any(idx < 0):
        raise BasisError("swapped configuration left the basis")
    return idx


def mbcn_patch_operator(phi: float, basis: Basis, r1: Sequence[int], r3: Sequence[int],
                        regions: MBCNRegions) -> np.ndarray:
    """W1^dagger(phi) S13 W1(phi) V1^s on a basis covering R1 and R3.

    ``r1`` and ``r3`` are the strip sites in ``basis`` numbering, paired
    row by row.  The twist is W(phi) = exp(-i phi n); this orientation makes
    a Laughlin state in the Landau gauge of ``hofstadter_hops`` wind +1.
    """
    perm = region_swap_permutation(basis, r1, r3)
    n1 = basis.configs[:, list(r1)].sum(axis=1).astype(float)
    w = np.exp(-1j * phi * n1)
    v1 = np.exp(1j * regions.s * 2 * np.pi / regions.ly_region *
                (basis.configs[:, list(r1)].astype(float) @ np.array([regions.row(s) for s in regions.r1], float)))
    # matrix element <perm(c)| ... |c>
    d = basis.dim
    op = np.zeros((d, d), dtype=complex)
    cols = np.arange(d)
    op[perm, cols] = np.conj(w[perm]) * w * v1
    return op


def mbcn_operator(phi: float, regions: MBCNRegions, basis: Basis) -> tuple[np.ndarray, np.ndarray]:
    """T(phi) on the full lattice basis, returned as (operator, diagonal of V2^s)."""
    v2 = polarization_phase(basis, regions.r2, regions, regions.s)
    t13 = mbcn_patch_operator(phi, basis, regions.r1, regions.r3, regions)
    return t13 * v2[None, :], v2


def mbcn_expectation(psi: np.ndarray, phis: Sequence[float], regions: MBCNRegions, basis: Basis) -> np.ndarray:
    """<T(phi)> for a state vector, without forming dense operators."""
    perm = region_swap_permutation(basis, regions.r1, regions.r3)
    n1 = basis.configs[:, regions.r1].sum(axis=1).astype(float)
    rows1 = np.array([regions.row(s) for s in regions.r1], float)
    v1 = np.exp(1j * regions.s * 2 * np.pi / regions.ly_region * (basis.configs[:, regions.r1].astype(float) @ rows1))
    v2 = polarization_phase(basis, regions.r2, regions, regions.s)
    out = []
    for phi in phis:
        w = np.exp(-1j * phi * n1)
        # (T psi)[perm[c]] = conj(w[perm[c]]) w[c] v1[c] v2[c] psi[c]
        out.append(np.sum(np.conj(psi[perm]) * np.conj(w[perm]) * w * v1 * v2 * psi))
    return np.array(out)


def winding_number(samples: Sequence[complex], eps: float = 0.0) -> tuple[int, bool]:
    """Winding of a closed sampled curve around the origin and a reliability flag."""
    z = np.asarray(samples, dtype=complex)
    if len(z) < 16:
        raise ValueError("need at least 16 grid points")
    reliable = bool(np.min(np.abs(z)) > eps)
    if np.any(z == 0):
        return 0, False
    d = np.angle(np.roll(z, -1) / z)
    total = d.sum() / (2 * np.pi)
    w = int(round(total))
    if abs(total - w) > 0.25:
        reliable = False
    return w, reliable


def hop_amplitude(params: HBHParams, to_site: int, from_site: int) -> complex:
    for t, f, amp in hofstadter_hops(params):
        if t == to_site and f == from_site:
            return amp
    raise ValueError(f"no bond between {from_site} and {to_site}")


def bond_current_operator(bond: tuple[int, int], params: HBHParams, basis: Basis,
                          site_map: dict | None = None) -> sp.csr_matrix:
    """i J_b b+_r b_r' + h.c. for bond (r, r') with J_b the hopping amplitude r' -> r.

    ``site_map`` translates lattice sites to ``basis`` sites for patch bases.
    """
    r, rp = bond
    amp = hop_amplitude(params, r, rp)
    a, b = (r, rp) if site_map is None else (site_map[r], site_map[rp])
    hop = hopping_operator(basis, a, b)
    op = 1j * amp * hop
    return (op + op.conj().T).tocsr()


def lattice_bonds(params: HBHParams) -> list[tuple[int, int]]:
    """Bonds (r, r') with r' -> r the forward hop (x+1 or y+1 from r')."""
    out = []
    for x in range(params.lx):
        for y in range(params.ly):
            s = lattice_site(x, y, params.ly)
            if x + 1 < params.lx:
                out.append((lattice_site(x + 1, y, params.ly), s))
            if y + 1 < params.ly:
                out.append((lattice_site(x, y + 1, params.ly), s))
    return out


def is_edge_bond(bond: tuple[int, int], params: HBHParams) -> bool:
    (x1, y1), (x2, y2) = [divmod(s, params.ly) for s in bond]
    if y1 == y2:
        return y1 in (0, params.ly - 1)
    return x1 in (0, params.lx - 1)


def bond_currents_exact(psi: np.ndarray, params: HBHParams, basis: Basis) -> dict:
    out = {}
    for bond in lattice_bonds(params):
        op = bond_current_operator(bond, params, basis)
        out[bond] = float(np.real(np.vdot(psi, op @ psi)))
    return out


def continuity_residuals(currents: dict, params: HBHParams) -> dict:
    """Net current into every interior site (zero on eigenstates)."""
    net = {}
    for (r, rp), j in currents.items():
        # j flows from rp to r
        net[r] = net.get(r, 0.0) + j
        net[rp] = net.get(rp, 0.0) - j
    interior = {}
    for s, v in net.items():
        x, y = divmod(s, params.ly)
        if 0 < x < params.lx - 1 and 0 < y < params.ly - 1:
            interior[s] = v
    return interior


def plaquette_layouts(lx: int, ly: int) -> list[list[list[int]]]:
    """Two tilings of the lattice into blocks of at most 2x2 sites.

    The second tiling is shifted by one site in x and y, so every bond is
    interior to a block in exactly one of them.
    """
    def blocks(n, shift):
        if shift == 0:
            return [list(range(i, min(i + 2, n))) for i in range(0, n, 2)]
        return [[0]] + [list(range(i, min(i + 2, n))) for i in range(1, n, 2)]

    layouts = []
    for shift in (0, 1):
        tiles = []
        for bx in blocks(lx, shift):
            for by in blocks(ly, shift):
                tiles.append([lattice_site(x, y, ly) for x in bx for y in by])
        layouts.append(tiles)
    return layouts


# ---------------------------------------------------------------------------
# swap operators and exact Renyi entropies
# ---------------------------------------------------------------------------

def swap_operator(subsystem: Sequence[int], basis: Basis) -> sp.csr_matrix:
    """Two-copy swap of the ``subsystem`` sites on the doubled basis (index x * d + y).

    Pairs whose exchanged configurations leave a constrained basis are
    annihilated; on tensor-product bases the result is a permutation.
    """
    d = basis.dim
    cols = basis.site_modes(sorted(subsystem))
    if basis.kind == "fermion":
        raise BasisError("fermionic swap needs mode-ordering signs; not supported")
    x, y = np.divmod(np.arange(d * d), d)
    cx = basis.configs[x].copy()
    cy = basis.configs[y].copy()
    cx[:, cols], cy[:, cols] = basis.configs[y][:, cols], basis.configs[x][:, cols]
    ix = basis.indices(cx)
    iy = basis.indices(cy)
    ok = (ix >= 0) & (iy >= 0)
    src = np.flatnonzero(ok)
    dst = ix[ok] * d + iy[ok]
    return sp.csr_matrix((np.ones(len(src), dtype=complex), (dst, src)), shape=(d * d, d * d))


def purity(rho: np.ndarray, basis: Basis, subsystem: Sequence[int]) -> float:
    if len(subsystem) == 0:
        return float(np.real(np.trace(rho)) ** 2)
    r, _ = partial_trace(rho, basis, subsystem)
    return float(np.real(np.trace(r @ r)))


def renyi2_exact(state: np.ndarray, basis: Basis, subsystem: Sequence[int]) -> float:
    rho = np.outer(state, state.conj()) if np.ndim(state) == 1 else state
    return -math.log(purity(rho, basis, subsystem))
