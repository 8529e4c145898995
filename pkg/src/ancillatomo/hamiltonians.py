"""Lattice Hamiltonians, ground states and real-time evolution.

Operators are ``scipy.sparse`` CSR matrices acting on a :class:`Basis`.  Units
follow the usual convention: Rabi frequency Omega = 1 for Rydberg atoms and
hopping J = 1 for the Hubbard-type models.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .hilbert import Basis, BasisError

DENSE_LIMIT = 512


class EvolutionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# elementary operators
# ---------------------------------------------------------------------------

def _sparse(basis: Basis, rows, cols, vals) -> sp.csr_matrix:
    return sp.coo_matrix((np.asarray(vals, dtype=complex), (np.asarray(rows), np.asarray(cols))),
                         shape=(basis.dim, basis.dim)).tocsr()


def diagonal_operator(basis: Basis, values: np.ndarray) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=complex), format="csr")


def number_operator(basis: Basis, site: int) -> sp.csr_matrix:
    """Total occupation of ``site`` (summed over spin for fermions)."""
    cols = basis.site_modes([site])
    if not cols:
        raise BasisError(f"site {site} is not part of the basis")
    return diagonal_operator(basis, basis.configs[:, cols].sum(axis=1))


def _flip_pairs(basis: Basis, site: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordinals (a, b) with a having ``site`` empty and b the admissible flipped config."""
    if not 0 <= site < basis.n_sites:
        raise BasisError(f"site {site} out of range")
    lo = np.flatnonzero(basis.configs[:, site] == 0)
    flipped = basis.configs[lo].copy()
    flipped[:, site] = 1
    hi = basis.indices(flipped)
    ok = hi >= 0
    return lo[ok], hi[ok]


def pauli_operator(basis: Basis, site: int, axis: str) -> sp.csr_matrix:
    """Projected Pauli operator P sigma P on a (possibly blockaded) qubit basis.

    |0> is the ground state and |1> the excited state, n = (1 + Z)/2.
    """
    if basis.kind not in ("qubit", "blockaded"):
        raise BasisError("Pauli operators need a qubit basis")
    if axis == "z":
        return diagonal_operator(basis, 2.0 * basis.configs[:, site] - 1.0)
    a, b = _flip_pairs(basis, site)
    if axis == "x":
        vals = np.ones(len(a))
        return _sparse(basis, np.r_[a, b], np.r_[b, a], np.r_[vals, vals])
    if axis == "y":
        # with Z = 2n - 1 a right-handed algebra XY = iZ needs Y|0> = -i|1>, Y|1> = i|0>
        return _sparse(basis, np.r_[b, a], np.r_[a, b], np.r_[-1j * np.ones(len(a)), 1j * np.ones(len(a))])
    raise ValueError(f"unknown axis {axis!r}")


def hopping_operator(basis: Basis, to_mode: int, from_mode: int) -> sp.csr_matrix:
    """a^dagger_to a_from for bosons or fermions (columns of the config table).

    Fermionic signs follow the Jordan-Wigner string over the column order.
    """
    if to_mode == from_mode:
        return diagonal_operator(basis, basis.configs[:, to_mode])
    cfg = basis.configs.astype(np.int64)
    cap = basis.max_occ if basis.kind == "boson" else 1
    ok = cfg[:, from_mode] > 0
    if cap is not None:
        ok &= cfg[:, to_mode] < cap
    src = np.flatnonzero(ok)
    new = cfg[src].copy()
    new[:, from_mode] -= 1
    new[:, to_mode] += 1
    dst = basis.indices(new)
    ok = dst >= 0
    src, dst, new = src[ok], dst[ok], new[ok]
    if basis.kind == "boson":
        amp = np.sqrt(cfg[src, from_mode]) * np.sqrt(new[:, to_mode])
    elif basis.kind == "fermion":
        before_from = cfg[src, :from_mode].sum(axis=1)
        mid = cfg[src].copy()
        mid[:, from_mode] = 0
        before_to = mid[:, :to_mode].sum(axis=1)
        amp = (-1.0) ** (before_from + before_to)
    else:
        raise BasisError("hopping needs a particle basis")
    return _sparse(basis, dst, src, amp)


def annihilation_operator(basis_from: Basis, basis_to: Basis, mode: int) -> sp.csr_matrix:
    """Matrix of a_mode mapping ``basis_from`` into ``basis_to`` (fermionic JW sign included)."""
    cfg = basis_from.configs.astype(np.int64)
    src = np.flatnonzero(cfg[:, mode] > 0)
    new = cfg[src].copy()
    new[:, mode] -= 1
    dst = basis_to.indices(new)
    ok = dst >= 0
    src, dst = src[ok], dst[ok]
    if basis_from.kind == "fermion":
        amp = (-1.0) ** cfg[src, :mode].sum(axis=1)
    else:
        amp = np.sqrt(cfg[src, mode])
    return sp.coo_matrix((amp.astype(complex), (dst, src)), shape=(basis_to.dim, basis_from.dim)).tocsr()


# ---------------------------------------------------------------------------
# model Hamiltonians
# ---------------------------------------------------------------------------

def graph_distance_two(n_sites: int, edges) -> list[tuple[int, int]]:
    """Pairs at graph distance exactly two, the next-nearest neighbours of a chain."""
    nbr = [set() for _ in range(n_sites)]
    for i, j in edges:
        nbr[i].add(j)
        nbr[j].add(i)
    out = set()
    for i in range(n_sites):
        for k in nbr[i]:
            for j in nbr[k]:
                if j != i and j not in nbr[i]:
                    out.add((min(i, j), max(i, j)))
    return sorted(out)


@dataclass(frozen=True)
class RydbergParams:
    omega: float = 1.0
    delta: float = 0.0
    v2: float = 0.0
    nnn_pairs: tuple | None = None


def rydberg_hamiltonian(basis: Basis, params: RydbergParams) -> sp.csr_matrix:
    """(Omega/2) sum P X_i P - Delta sum n_i + V2 sum_{next-nearest} n_i n_j."""
    if basis.kind not in ("qubit", "blockaded"):
        raise BasisError("Rydberg Hamiltonian needs a qubit basis")
    n = basis.n_sites
    cfg = basis.configs.astype(float)
    diag = -params.delta * cfg.sum(axis=1)
    if params.v2:
        pairs = params.nnn_pairs if params.nnn_pairs is not None else graph_distance_two(n, basis.edges)
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise BasisError(f"interaction pair {(i, j)} outside the basis")
            diag = diag + params.v2 * cfg[:, i] * cfg[:, j]
    h = diagonal_operator(basis, diag)
    for s in range(n):
        h = h + (params.omega / 2) * pauli_operator(basis, s, "x")
    return h.tocsr()


def local_energy_density(basis: Basis, site: int, params: RydbergParams) -> sp.csr_matrix:
    """E_i = (Omega/2) P X_i P - Delta n_i."""
    return ((params.omega / 2) * pauli_operator(basis, site, "x")
            - params.delta * number_operator(basis, site)).tocsr()


def apply_local_rotation(state: np.ndarray, basis: Basis, site: int, angle: float,
                         axis: str = "y") -> np.ndarray:
    """Apply exp(-i (angle/2) P sigma_axis P) on one site of a qubit basis.

    The projected generator only couples admissible pairs |..0..>, |..1..>, so
    the exponential is evaluated exactly pair by pair.
    """
    if not 0 <= site < basis.n_sites:
        raise BasisError(f"site {site} out of range")
    out = np.array(state, dtype=complex, copy=True)
    if axis == "z":
        return np.exp(-0.5j * angle * (2.0 * basis.configs[:, site] - 1.0)) * out
    a, b = _flip_pairs(basis, site)
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    va, vb = out[a].copy(), out[b].copy()
    if axis == "y":
        out[a] = c * va + s * vb
        out[b] = -s * va + c * vb
    elif axis == "x":
        out[a] = c * va - 1j * s * vb
        out[b] = -1j * s * va + c * vb
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return out


@dataclass(frozen=True)
class FermiHubbardParams:
    j: float = 1.0
    u: float = 0.0
    bonds: tuple = ()


def fermi_hubbard_hamiltonian(basis: Basis, params: FermiHubbardParams) -> sp.csr_matrix:
    """-J sum_{bonds, sigma} (c^dagger_i c_j + h.c.) + U sum n_up n_down."""
    if basis.kind != "fermion":
        raise BasisError("Fermi-Hubbard needs a fermionic basis")
    mode = {m: c for c, m in enumerate(basis.modes)}
    h = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for i, j in params.bonds:
        if i == j:
            raise BasisError("self bond")
        for spin in (0, 1):
            if (i, spin) not in mode or (j, spin) not in mode:
                raise BasisError(f"bond {(i, j)} references a missing site")
            t = hopping_operator(basis, mode[(i, spin)], mode[(j, spin)])
            h = h - params.j * (t + t.conj().T)
    if params.u:
        dbl = np.zeros(basis.dim)
        for s in range(basis.n_sites):
            dbl += basis.configs[:, mode[(s, 0)]].astype(float) * basis.configs[:, mode[(s, 1)]]
        h = h + params.u * diagonal_operator(basis, dbl)
    return h.tocsr()


def lattice_site(x: int, y: int, ly: int) -> int:
    return x * ly + y


@dataclass(frozen=True)
class HBHParams:
    lx: int
    ly: int
    j: float = 1.0
    u: float = 0.0
    alpha: float = 0.0
    x_offset: int = 0

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise ValueError("flux density alpha must lie in [0, 1)")


def hofstadter_hops(params: HBHParams) -> list[tuple[int, int, complex]]:
    """(to, from, amplitude) for every hop a^dagger_to a_from in the Landau gauge.

    Horizontal hops carry -J, vertical hops (x,y)->(x,y+1) carry
    -J exp(2 pi i alpha (x + x_offset)); conjugate hops are implied.
    """
    hops = []
    for x in range(params.lx):
        for y in range(params.ly):
            s = lattice_site(x, y, params.ly)
            if x + 1 < params.lx:
                hops.append((lattice_site(x + 1, y, params.ly), s, -params.j + 0j))
            if y + 1 < params.ly:
                phase = np.exp(2j * np.pi * params.alpha * (x + params.x_offset))
                hops.append((lattice_site(x, y + 1, params.ly), s, -params.j * phase))
    return hops


def bose_hubbard_hamiltonian(basis: Basis, hops, u: float) -> sp.csr_matrix:
    """sum (amp a^dagger_to a_from + h.c.) + (U/2) sum n (n - 1)."""
    if basis.kind != "boson":
        raise BasisError("Bose-Hubbard needs a bosonic basis")
    h = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for to, frm, amp in hops:
        if not (0 <= to < basis.n_sites and 0 <= frm < basis.n_sites):
            raise BasisError(f"hop {(to, frm)} outside the basis")
        t = amp * hopping_operator(basis, to, frm)
        h = h + t + t.conj().T
    n = basis.configs.astype(float)
    h = h + diagonal_operator(basis, 0.5 * u * (n * (n - 1)).sum(axis=1))
    return h.tocsr()


def hbh_hamiltonian(basis: Basis, params: HBHParams) -> sp.csr_matrix:
    if basis.n_sites != params.lx * params.ly:
        raise BasisError("basis does not match the lattice size")
    return bose_hubbard_hamiltonian(basis, hofstadter_hops(params), params.u)


def doublon_density(state: np.ndarray, basis: Basis) -> float:
    """<sum n(n-1)/2> divided by the number of boson pairs N(N-1)/2."""
    if basis.kind != "boson":
        raise BasisError("doublon density needs a bosonic basis")
    n = basis.configs.astype(float)
    pairs = (n * (n - 1) / 2).sum(axis=1)
    total = n.sum(axis=1)
    norm = total * (total - 1) / 2
    w = np.abs(state) ** 2
    val = np.where(norm > 0, pairs / np.where(norm > 0, norm, 1), 0.0)
    return float(np.dot(w, val) / w.sum())


# ---------------------------------------------------------------------------
# spectra and dynamics
# ---------------------------------------------------------------------------

@dataclass
class GroundState:
    energy: float
    vector: np.ndarray
    gap: float
    degenerate: bool


def ground_state(h, tol: float = 1e-12, maxiter: int | None = None, degeneracy_tol: float = 1e-10) -> GroundState:
    """Lowest eigenpair; flags a (near-)degenerate ground space."""
    dim = h.shape[0]
    if dim <= DENSE_LIMIT or dim < 4:
        dense = h.toarray() if sp.issparse(h) else np.asarray(h)
        w, v = np.linalg.eigh(dense)
        e0, vec = w[0], v[:, 0]
        gap = w[1] - w[0] if dim > 1 else np.inf
    else:
        rng = np.random.default_rng(0)
        v0 = rng.normal(size=dim) + 0j
        try:
            w, v = eigsh(h, k=2, which="SA", tol=tol, maxiter=maxiter, v0=v0)
        except Exception as exc:  # ArpackNoConvergence
            raise EvolutionError(f"ground-state solver did not converge: {exc}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        e0, vec, gap = w[0], v[:, 0], w[1] - w[0]
    vec = vec / np.linalg.norm(vec)
    # fix the global phase: largest component real positive
    k = np.argmax(np.abs(vec))
    vec = vec * np.exp(-1j * np.angle(vec[k]))
    resid = np.linalg.norm(h @ vec - e0 * vec)
    if resid > 1e-8:
        raise EvolutionError(f"ground-state residual {resid:.2e} too large")
    return GroundState(float(e0), vec, float(gap), bool(gap < degeneracy_tol))


def _lanczos_step(h, v: np.ndarray, dt: float, m: int, tol: float, scale: float = 1.0):
    """Advance v by exp(-i H dt) with an m-dimensional Krylov space.

    Returns the new vector and the a-posteriori error estimate.  ``scale``
    bounds ||H|| and sets the breakdown threshold.
    """
    n = v.shape[0]
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return v.copy(), 0.0
    q = np.zeros((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    q[0] = v / beta0
    k = m
    for j in range(m):
        w = h @ q[j]
        alpha[j] = np.vdot(q[j], w).real
        w = w - alpha[j] * q[j] - (beta[j - 1] * q[j - 1] if j else 0)
        # full reorthogonalization keeps the small basis orthonormal
        w = w - q[: j + 1].T @ (q[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        # invariant subspace exhausted; the residual is rounding noise
        if beta[j] < 1e-12 * scale:
            k = j + 1
            break
        q[j + 1] = w / beta[j]
    t = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    ev, evec = np.linalg.eigh(t)
    coef = evec @ (np.exp(-1j * ev * dt) * evec[0].conj())
    err = 0.0 if k < m else beta[k - 1] * abs(coef[-1])
    return beta0 * (q[:k].T @ coef), err


def krylov_evolve(h, v: np.ndarray, t: float, tol: float = 1e-12, m: int = 30,
                  max_steps: int = 100_000) -> np.ndarray:
    """Lanczos propagator with adaptive substeps."""
    v = np.asarray(v, dtype=complex)
    if t == 0:
        return v.copy()
    sign = 1.0 if t > 0 else -1.0
    remaining = abs(t)
    norm_est = max(abs(sp.linalg.norm(h, 1)) if sp.issparse(h) else np.linalg.norm(h, 1), 1e-14)
    dt = min(remaining, 10.0 / norm_est)
    steps = 0
    while remaining > 1e-15:
        dt = min(dt, remaining)
        new, err = _lanczos_step(h, v, sign * dt, m, tol, norm_est)
        vnorm = max(1.0, np.linalg.norm(v))
        # the error estimate bottoms out at rounding level; shrinking dt below that only stalls
        budget = max(tol * dt / abs(t), 50 * np.finfo(float).eps) * vnorm
        if err > budget and dt > 1e-10:
            dt *= 0.5
            steps += 1
            if steps > max_steps:
                raise EvolutionError("Krylov evolution failed to reach the requested tolerance")
            continue
        v = new
        remaining -= dt
        steps += 1
        if steps > max_steps:
            raise EvolutionError("Krylov evolution exceeded the step limit")
        if err < 0.01 * budget:
            dt *= 1.5
    return v


def propagator(h, t: float) -> np.ndarray:
    """Dense exp(-i H t) by scaling and squaring."""
    dense = h.toarray() if sp.issparse(h) else np.asarray(h)
    return sla.expm(-1j * t * dense)


def evolve(h, x: np.ndarray, t: float, tol: float = 1e-12, kind: str | None = None) -> np.ndarray:
    """Apply exp(-iHt) to a state vector, a block of column vectors, or a density matrix.

    ``kind`` is 'state', 'columns' or 'density'; by default a 1-d input is a
    state and a square 2-d input a density matrix.
    """
    x = np.asarray(x, dtype=complex)
    dim = h.shape[0]
    if kind is None:
        kind = "state" if x.ndim == 1 else ("density" if x.shape == (dim, dim) else "columns")
    if t == 0:
        return x.copy()
    if dim < DENSE_LIMIT:
        u = propagator(h, t)
        if kind == "density":
            return u @ x @ u.conj().T
        return u @ x
    if kind == "state":
        return krylov_evolve(h, x, t, tol)
    cols = np.column_stack([krylov_evolve(h, x[:, c], t, tol) for c in range(x.shape[1])])
    if kind == "columns":
        return cols
    # U rho U^dagger = (U (U rho)^dagger)^dagger
    return np.column_stack([krylov_evolve(h, c, t, tol) for c in cols.conj()]).conj().T


class SpectralPropagator:
    """exp(-iHt) for many times from one dense eigendecomposition."""

    def __init__(self, h):
        dense = h.toarray() if sp.issparse(h) else np.asarray(h)
        if np.allclose(dense.imag, 0):
            dense = dense.real
        self.energies, self.vectors = np.linalg.eigh(dense)

    def apply(self, x: np.ndarray, t: float) -> np.ndarray:
        c = self.vectors.conj().T @ x
        phase = np.exp(-1j * self.energies * t)
        c = phase[:, None] * c if c.ndim == 2 else phase * c
        return self.vectors @ c
