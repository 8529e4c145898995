"""Constrained many-body bases, vectorization and partial traces.

A :class:`Basis` is an ordered table of occupation configurations, one row
per basis state and one column per mode.  Modes are sites for qubits,
blockaded atoms and bosons; for spinful fermions every site contributes an
up mode and a down mode, with all up modes listed before all down modes.
Rows are kept in lexicographic order so that ordinals are reproducible.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

KINDS = ("qubit", "blockaded", "boson", "fermion")

# refuse to enumerate more configurations than this
MAX_DIM = 5_000_000


class BasisError(ValueError):
    """Raised for inconsistent or empty basis specifications."""


@dataclass(frozen=True, eq=False)
class Basis:
    kind: str
    n_sites: int
    configs: np.ndarray
    modes: tuple
    edges: tuple = ()
    max_occ: int | None = None
    positions: tuple | None = None
    _lookup: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BasisError(f"unknown basis kind {self.kind!r}")
        cfg = np.ascontiguousarray(self.configs, dtype=np.uint8)
        if cfg.ndim != 2 or cfg.shape[1] != len(self.modes):
            raise BasisError("configs must be a (dim, n_modes) table")
        if cfg.shape[0] == 0:
            raise BasisError("constraints admit no configuration")
        cfg.setflags(write=False)
        object.__setattr__(self, "configs", cfg)
        lookup = {row.tobytes(): i for i, row in enumerate(cfg)}
        if len(lookup) != cfg.shape[0]:
            raise BasisError("duplicate configurations")
        object.__setattr__(self, "_lookup", lookup)

    @property
    def dim(self) -> int:
        return self.configs.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def index(self, config) -> int:
        key = np.asarray(config, dtype=np.uint8).tobytes()
        try:
            return self._lookup[key]
        except KeyError:
            raise BasisError(f"configuration {tuple(config)} is not admissible") from None

    def indices(self, configs: np.ndarray) -> np.ndarray:
        """Ordinals of many configurations at once; -1 marks missing rows."""
        cfg = np.ascontiguousarray(configs, dtype=np.uint8)
        get = self._lookup.get
        return np.fromiter((get(r.tobytes(), -1) for r in cfg), dtype=np.int64, count=cfg.shape[0])

    def site_modes(self, sites: Iterable[int]) -> list[int]:
        """Column indices of all modes living on the given sites."""
        sites = set(int(s) for s in sites)
        if self.kind == "fermion":
            return [c for c, (s, _) in enumerate(self.modes) if s in sites]
        return [c for c, s in enumerate(self.modes) if s in sites]

    def particle_numbers(self) -> np.ndarray:
        """Total occupation of each configuration."""
        return self.configs.sum(axis=1, dtype=np.int64)

    def spin_numbers(self) -> np.ndarray:
        """(N_up, N_down) per configuration for fermionic bases."""
        if self.kind != "fermion":
            raise BasisError("spin resolved counts need a fermionic basis")
        up = [c for c, (_, sp) in enumerate(self.modes) if sp == 0]
        dn = [c for c, (_, sp) in enumerate(self.modes) if sp == 1]
        cfg = self.configs.astype(np.int64)
        return np.stack([cfg[:, up].sum(axis=1), cfg[:, dn].sum(axis=1)], axis=1)

    def is_admissible(self, config) -> bool:
        """Re-check a configuration against the raw constraints of this basis."""
        c = np.asarray(config, dtype=np.int64)
        if c.shape != (self.n_modes,) or np.any(c < 0):
            return False
        if self.kind in ("qubit", "blockaded", "fermion") and np.any(c > 1):
            return False
        if self.max_occ is not None and np.any(c > self.max_occ):
            return False
        for i, j in self.edges:
            if c[i] and c[j]:
                return False
        return True


def _lex_sorted(configs: np.ndarray) -> np.ndarray:
    if configs.shape[0] == 0:
        return configs
    order = np.lexsort(configs.T[::-1])
    return configs[order]


def _check_dim(n: int):
    if n > MAX_DIM:
        raise BasisError(f"basis dimension {n} exceeds the enumeration limit {MAX_DIM}")


def chain_edges(n: int, offset: int = 0) -> list[tuple[int, int]]:
    return [(offset + i, offset + i + 1) for i in range(n - 1)]


def qubit_basis(n: int) -> Basis:
    if n < 1:
        raise BasisError("need at least one qubit")
    _check_dim(2**n)
    cfg = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)
    return Basis("qubit", n, cfg, tuple(range(n)))


def blockaded_basis(n: int, edges: Sequence[tuple[int, int]] | None = None,
                    positions: Sequence | None = None) -> Basis:
    """Bit strings with no two excited sites joined by a blockade edge.

    ``edges`` defaults to a nearest-neighbour chain.
    """
    if n < 1:
        raise BasisError("need at least one site")
    edges = chain_edges(n) if edges is None else [tuple(sorted(map(int, e))) for e in edges]
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise BasisError(f"blockade edge {(i, j)} does not join two distinct declared sites")
    earlier = [[i for i, j in edges if j == s] for s in range(n)]
    partial = np.zeros((1, 0), dtype=np.uint8)
    for s in range(n):
        zero = np.hstack([partial, np.zeros((len(partial), 1), np.uint8)])
        if earlier[s]:
            free = ~np.any(partial[:, earlier[s]] == 1, axis=1)
        else:
            free = np.ones(len(partial), bool)
        one = np.hstack([partial[free], np.ones((int(free.sum()), 1), np.uint8)])
        partial = np.vstack([zero, one])
        _check_dim(len(partial))
    return Basis("blockaded", n, _lex_sorted(partial), tuple(range(n)),
                 edges=tuple(sorted(set(edges))),
                 positions=None if positions is None else tuple(map(tuple, positions)))


def _as_set(n, name) -> set[int]:
    if n is None:
        raise BasisError(f"{name} must be given")
    if np.isscalar(n):
        return {int(n)}
    return set(int(v) for v in n)


def boson_basis(n_sites: int, n_particles, max_occ: int | None = None,
                positions: Sequence | None = None) -> Basis:
    """Bosonic Fock states with total number in ``n_particles`` (int or iterable)."""
    totals = _as_set(n_particles, "n_particles")
    if min(totals) < 0:
        raise BasisError("particle numbers must be non-negative")
    nmax = max(totals)
    cap = nmax if max_occ is None else min(max_occ, nmax)
    partial = np.zeros((1, 0), dtype=np.uint8)
    sums = np.zeros(1, dtype=np.int64)
    for _ in range(n_sites):
        blocks, bsums = [], []
        for v in range(cap + 1):
            ok = sums + v <= nmax
            blocks.append(np.hstack([partial[ok], np.full((int(ok.sum()), 1), v, np.uint8)]))
            bsums.append(sums[ok] + v)
        partial, sums = np.vstack(blocks), np.concatenate(bsums)
        _check_dim(len(partial))
    keep = np.isin(sums, sorted(totals))
    return Basis("boson", n_sites, _lex_sorted(partial[keep]), tuple(range(n_sites)),
                 max_occ=cap, positions=None if positions is None else tuple(map(tuple, positions)))


def _fixed_weight_strings(n: int, weights: set[int]) -> np.ndarray:
    rows = []
    for w in sorted(weights):
        if 0 <= w <= n:
            for occ in itertools.combinations(range(n), w):
                r = np.zeros(n, np.uint8)
                r[list(occ)] = 1
                rows.append(r)
    return _lex_sorted(np.array(rows, dtype=np.uint8).reshape(-1, n))


def fermion_modes(n_sites: int, offset: int = 0) -> tuple:
    return tuple((offset + s, 0) for s in range(n_sites)) + tuple((offset + s, 1) for s in range(n_sites))


def fermion_basis(n_sites: int, n_up=None, n_down=None, sectors=None,
                  positions: Sequence | None = None) -> Basis:
    """Spinful fermions: modes are all up orbitals followed by all down orbitals.

    Either give ``n_up``/``n_down`` (ints or iterables, every combination is
    allowed) or an explicit list of ``(N_up, N_down)`` sectors.  With neither,
    the full Fock space is returned.
    """
    if sectors is None:
        ups = set(range(n_sites + 1)) if n_up is None else _as_set(n_up, "n_up")
        dns = set(range(n_sites + 1)) if n_down is None else _as_set(n_down, "n_down")
        sectors = [(u, d) for u in ups for d in dns]
    sectors = sorted(set((int(u), int(d)) for u, d in sectors))
    ups = _fixed_weight_strings(n_sites, {u for u, _ in sectors})
    dns = _fixed_weight_strings(n_sites, {d for _, d in sectors})
    allowed = set(sectors)
    nu, nd = ups.sum(axis=1), dns.sum(axis=1)
    rows = [np.concatenate([u, d]) for u, a in zip(ups, nu) for d, b in zip(dns, nd) if (a, b) in allowed]
    _check_dim(len(rows))
    cfg = np.array(rows, dtype=np.uint8).reshape(-1, 2 * n_sites)
    return Basis("fermion", n_sites, _lex_sorted(cfg), fermion_modes(n_sites),
                 positions=None if positions is None else tuple(map(tuple, positions)))


def build_basis(spec: dict) -> Basis:
    """Build a basis from a plain mapping, as found in experiment configs."""
    kind = spec.get("kind")
    n = int(spec.get("n_sites", 0))
    pos = spec.get("positions")
    if kind == "qubit":
        return qubit_basis(n)
    if kind == "blockaded":
        return blockaded_basis(n, spec.get("edges"), pos)
    if kind == "boson":
        return boson_basis(n, spec["n_particles"], spec.get("max_occ"), pos)
    if kind == "fermion":
        return fermion_basis(n, spec.get("n_up"), spec.get("n_down"), spec.get("sectors"), pos)
    raise BasisError(f"unknown basis kind {kind!r}")


# ---------------------------------------------------------------------------
# system + ancilla registers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtendedBasis(Basis):
    """Joint system+ancilla basis; system modes occupy the leading columns."""
    system: Basis = None
    ancilla: Basis = None

    @property
    def n_sys_modes(self) -> int:
        return self.system.n_modes

    def split(self, z=None) -> tuple[np.ndarray, np.ndarray]:
        """System and ancilla ordinals of extended states (-1 if outside the sub-bases)."""
        cfg = self.configs if z is None else self.configs[np.atleast_1d(z)]
        k = self.n_sys_modes
        return self.system.indices(cfg[:, :k]), self.ancilla.indices(cfg[:, k:])

    def embed(self, sys_idx, anc_idx) -> np.ndarray:
        """Extended ordinals of product configurations |s>|a>."""
        s = np.atleast_1d(np.asarray(sys_idx))
        a = np.atleast_1d(np.asarray(anc_idx))
        s, a = np.broadcast_arrays(s, a)
        cfg = np.hstack([self.system.configs[s.ravel()], self.ancilla.configs[a.ravel()]])
        out = self.indices(cfg)
        if np.any(out < 0):
            raise BasisError("product configuration violates the joint constraints")
        return out.reshape(s.shape)

    def product_state(self, anc_state: np.ndarray) -> np.ndarray:
        """Isometry V with V|k> = |k> (x) |phi>, shape (d_ext, d_sys)."""
        phi = np.asarray(anc_state, dtype=complex)
        if phi.shape != (self.ancilla.dim,):
            raise BasisError("ancilla state has the wrong length")
        support = np.flatnonzero(np.abs(phi) > 0)
        iso = np.zeros((self.dim, self.system.dim), dtype=complex)
        ks = np.arange(self.system.dim)
        for a in support:
            iso[self.embed(ks, np.full_like(ks, a)), ks] += phi[a]
        return iso


def tensor_extend(system: Basis, ancilla: Basis, seam_edges: Sequence[tuple[int, int]] = (),
                  anc_positions: Sequence | None = None) -> ExtendedBasis:
    """Extend ``system`` by ``ancilla``.

    Ancilla sites are renumbered ``n_sys .. n_sys + n_anc - 1``.  ``seam_edges``
    are blockade edges (system site, ancilla site) in that joint numbering.
    For particle bases the joint basis holds every arrangement of the combined
    particle numbers over all sites, since a quench may move particles across.
    """
    if system.kind != ancilla.kind and {system.kind, ancilla.kind} != {"qubit", "blockaded"}:
        raise BasisError("system and ancilla kinds are incompatible")
    ns, na = system.n_sites, ancilla.n_sites
    n = ns + na
    for i, j in seam_edges:
        if not (0 <= i < n and 0 <= j < n):
            raise BasisError(f"seam edge {(i, j)} references an undeclared site")
    pos = None
    if system.positions is not None and (anc_positions or ancilla.positions) is not None:
        pos = tuple(system.positions) + tuple(map(tuple, anc_positions or ancilla.positions))

    if system.kind in ("qubit", "blockaded") and ancilla.kind in ("qubit", "blockaded"):
        edges = list(system.edges) + [(i + ns, j + ns) for i, j in ancilla.edges] + [tuple(sorted(e)) for e in seam_edges]
        cfg = np.hstack([np.repeat(system.configs, ancilla.dim, axis=0),
                         np.tile(ancilla.configs, (system.dim, 1))])
        ok = np.ones(len(cfg), bool)
        for i, j in edges:
            ok &= ~((cfg[:, i] == 1) & (cfg[:, j] == 1))
        kind = "blockaded" if edges else "qubit"
        return ExtendedBasis(kind, n, cfg[ok], tuple(range(n)), edges=tuple(sorted(set(edges))),
                             positions=pos, system=system, ancilla=ancilla)

    if seam_edges:
        raise BasisError("seam blockade edges only apply to qubit registers")

    if system.kind == "boson":
        totals = sorted({int(a + b) for a in set(system.particle_numbers()) for b in set(ancilla.particle_numbers())})
        # a register cap only binds if it is below that register's own particle number
        caps = [b.max_occ for b in (system, ancilla)
                if b.max_occ is not None and b.max_occ < max(b.particle_numbers(), default=0)]
        full = boson_basis(n, totals, max(caps) if caps else None)
        return ExtendedBasis("boson", n, full.configs, tuple(range(n)), max_occ=full.max_occ,
                             positions=pos, system=system, ancilla=ancilla)

    sys_sec = {tuple(x) for x in system.spin_numbers()}
    anc_sec = {tuple(x) for x in ancilla.spin_numbers()}
    sectors = sorted({(a[0] + b[0], a[1] + b[1]) for a in sys_sec for b in anc_sec})
    # build per-register strings so that the column layout is sys modes then ancilla modes
    rows = []
    sys_all = fermion_basis(ns)
    anc_all = fermion_basis(na)
    sys_n = sys_all.spin_numbers()
    anc_n = anc_all.spin_numbers()
    secset = set(sectors)
    for i, (su, sd) in enumerate(sys_n):
        ok = [(su + au, sd + ad) in secset for au, ad in anc_n]
        for j in np.flatnonzero(ok):
            rows.append(np.concatenate([sys_all.configs[i], anc_all.configs[j]]))
    _check_dim(len(rows))
    cfg = _lex_sorted(np.array(rows, dtype=np.uint8))
    modes = fermion_modes(ns) + fermion_modes(na, offset=ns)
    return ExtendedBasis("fermion", n, cfg, modes, positions=pos, system=system, ancilla=ancilla)


# ---------------------------------------------------------------------------
# states and operators as plain arrays
# ---------------------------------------------------------------------------

def basis_state(basis: Basis, config) -> np.ndarray:
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.index(config)] = 1.0
    return v


def validate_density_matrix(rho: np.ndarray, tol: float = 1e-10, psd_tol: float = 1e-9) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError("density matrix trace differs from one")
    if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -psd_tol:
        raise ValueError("density matrix has a negative eigenvalue")


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def vectorize(a: np.ndarray) -> np.ndarray:
    """Row-major vectorization, so that (A|B) = vec(A)^dagger vec(B) = Tr(A^dagger B)."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return a.reshape(-1).copy()


def devectorize(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    n = int(round(np.sqrt(v.shape[0]))) if dim is None else dim
    if n * n != v.shape[0]:
        raise ValueError(f"vector of length {v.shape[0]} is not a vectorized {n}x{n} matrix")
    return v.reshape(n, n).copy()


def _reorder_signs(basis: Basis, first: Sequence[int]) -> np.ndarray:
    """Fermionic sign from moving the modes ``first`` ahead of all others."""
    rest = [c for c in range(basis.n_modes) if c not in set(first)]
    perm = list(first) + rest
    occ = basis.configs[:, perm].astype(np.int64)
    pos = np.asarray(perm)
    sign = np.ones(basis.dim, dtype=np.int64)
    # count inversions among occupied modes between original and new order
    for a in range(len(perm)):
        later = pos[a + 1:] < pos[a]
        if later.any():
            sign *= np.where(occ[:, a] & (occ[:, a + 1:][:, later].sum(axis=1) % 2 == 1), -1, 1)
    return sign


def partial_trace(state: np.ndarray, basis: Basis, keep_sites: Sequence[int]) -> tuple[np.ndarray, Basis]:
    """Reduced density matrix on ``keep_sites``.

    ``state`` may be a state vector or a density matrix on ``basis``.  The
    kept register is indexed by the distinct restrictions of the basis
    configurations to the kept modes, which is well defined for constrained
    bases too.  For fermions the kept modes are first moved to the front of
    the Jordan-Wigner order.
    """
    keep_sites = sorted(set(int(s) for s in keep_sites))
    if any(s < 0 or s >= basis.n_sites for s in keep_sites):
        raise BasisError("kept site outside the basis")
    cols = basis.site_modes(keep_sites)
    other = [c for c in range(basis.n_modes) if c not in set(cols)]
    state = np.asarray(state)
    if basis.kind == "fermion":
        sign = _reorder_signs(basis, cols)
        state = sign * state if state.ndim == 1 else sign[:, None] * state * sign[None, :]

    keep_cfg = basis.configs[:, cols]
    rest_cfg = basis.configs[:, other]
    kept = _lex_sorted(np.unique(keep_cfg, axis=0))
    if basis.kind == "fermion":
        remap = {old: new for new, old in enumerate(sorted(keep_sites))}
        modes = tuple((remap[s], sp) for s, sp in (basis.modes[c] for c in cols))
        red = Basis("fermion", len(keep_sites), kept, modes)
    else:
        remap = {old: new for new, old in enumerate(keep_sites)}
        edges = tuple((remap[i], remap[j]) for i, j in basis.edges if i in remap and j in remap)
        kind = basis.kind if basis.kind != "blockaded" or edges else "qubit"
        pos = None if basis.positions is None else tuple(basis.positions[s] for s in keep_sites)
        red = Basis(kind, len(keep_sites), kept, tuple(range(len(keep_sites))), edges=edges,
                    max_occ=basis.max_occ, positions=pos)
    ia = red.indices(keep_cfg)
    _, ib = np.unique(rest_cfg, axis=0, return_inverse=True)
    ib = ib.ravel()
    nb = int(ib.max()) + 1 if len(ib) else 0

    if state.ndim == 1:
        psi = np.zeros((red.dim, nb), dtype=complex)
        psi[ia, ib] = state
        return psi @ psi.conj().T, red
    rho = np.zeros((red.dim, red.dim), dtype=complex)
    order = np.argsort(ib, kind="stable")
    bounds = np.searchsorted(ib[order], np.arange(nb + 1))
    for b in range(nb):
        idx = order[bounds[b]:bounds[b + 1]]
        rho[np.ix_(ia[idx], ia[idx])] += state[np.ix_(idx, idx)]
    return rho, red


def embed_vector(vec: np.ndarray, source: Basis, target: Basis) -> np.ndarray:
    """Copy amplitudes from ``source`` into the larger basis ``target`` with equal mode layout."""
    idx = target.indices(source.configs)
    if np.any(idx < 0):
        raise BasisError("source configurations are missing from the target basis")
    out = np.zeros(target.dim, dtype=np.result_type(vec, complex))
    out[idx] = vec
    return out
