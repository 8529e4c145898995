"""Scrambling maps: from a quench configuration to outcome statistics.

For a system state rho and a fixed ancilla state |phi>, the joint register
evolves under U = exp(-iHt) and is read out in the configuration basis.  The
outcome distribution is linear in rho, P = S vec(rho), with

    S[z, (k, l)] = <z| U (|k><l| (x) |phi><phi|) U^dagger |z>.

All of S follows from the d_ext x d_sys amplitude table A[z, k] = <z|U|k, phi>:
S[z, (k, l)] = A[z, k] conj(A[z, l]), and the effective POVM vectors are
|S_z> = conj(A[z, :]).

When the physics conserves a charge, only operators that are block diagonal
in the system charge sectors can leave a trace in P.  Such maps keep only the
block-diagonal columns (k, l); ``columns`` lists them as flat row-major
indices k * d_sys + l.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .hamiltonians import evolve, propagator
from .hilbert import Basis, ExtendedBasis

NEG_CLIP = -1e-10
DEFAULT_BUDGET_MB = 4096


class MapBudgetError(MemoryError):
    pass


class DistributionError(ValueError):
    pass


def operator_columns(d_sys: int, charges: Sequence | None = None) -> np.ndarray:
    """Flat indices k*d+l of matrix units allowed by a charge label per basis state."""
    if charges is None:
        return np.arange(d_sys * d_sys)
    q = np.asarray(charges)
    if q.ndim == 2:
        q = np.array([hash(tuple(r)) for r in q])
    same = q[:, None] == q[None, :]
    return np.flatnonzero(same.ravel())


def config_hash(ext: Basis, hamiltonian=None, t: float = 0.0, anc_state=None, unitary=None,
                columns=None, extra: str = "") -> str:
    """Stable digest of everything that determines a map."""
    h = hashlib.sha256()
    h.update(ext.kind.encode())
    h.update(np.ascontiguousarray(ext.configs).tobytes())
    if hamiltonian is not None:
        coo = sp.coo_matrix(hamiltonian)
        vals = np.round(coo.data.astype(complex), 14)
        order = np.lexsort((coo.col, coo.row))
        h.update(np.ascontiguousarray(coo.row[order].astype(np.int64)).tobytes())
        h.update(np.ascontiguousarray(coo.col[order].astype(np.int64)).tobytes())
        h.update(np.ascontiguousarray(vals[order].real + 0.0).tobytes())
        h.update(np.ascontiguousarray(vals[order].imag + 0.0).tobytes())
    if unitary is not None:
        u = np.round(np.asarray(unitary, dtype=complex), 14)
        h.update(np.ascontiguousarray(u.real + 0.0).tobytes())
        h.update(np.ascontiguousarray(u.imag + 0.0).tobytes())
    h.update(repr(round(float(t), 14)).encode())
    if anc_state is not None:
        phi = np.round(np.asarray(anc_state, dtype=complex), 14)
        h.update(np.ascontiguousarray(phi.real + 0.0).tobytes())
        h.update(np.ascontiguousarray(phi.imag + 0.0).tobytes())
    if columns is not None:
        h.update(np.ascontiguousarray(np.asarray(columns, dtype=np.int64)).tobytes())
    h.update(extra.encode())
    return h.hexdigest()[:32]


@dataclass
class NoiseChannel:
    """Noise acting during the quench.

    ``local-dephasing`` applies E_p(rho) = (1-p) rho + (p/n) sum_i Z_i rho Z_i
    after every one of ``steps`` unitary slices with p = gamma t / steps.
    ``global-depolarizing`` is handled in closed form.
    """
    kind: str
    rate: float
    steps: int | None = None
    sites: tuple | None = None
    energy_scale: float = 1.0

    def trotter_steps(self, t: float) -> int:
        if self.steps is not None:
            return int(self.steps)
        return max(1, math.ceil(20 * max(self.rate * t, self.energy_scale * t)))


@dataclass
class QuenchConfig:
    """Everything that fixes a scrambling map.

    Give either ``hamiltonian`` (on ``ext``) with ``time``, or an explicit
    ``unitary``.
    """
    ext: ExtendedBasis
    anc_state: np.ndarray
    hamiltonian: object = None
    time: float = 0.0
    unitary: np.ndarray | None = None
    charges: Sequence | None = None
    setup: str = "global"
    noise: NoiseChannel | None = None
    label: str = ""

    def __post_init__(self):
        phi = np.asarray(self.anc_state, dtype=complex)
        if abs(np.linalg.norm(phi) - 1) > 1e-10:
            raise ValueError("ancilla state must be normalized")
        self.anc_state = phi
        if self.hamiltonian is None and self.unitary is None:
            raise ValueError("need a Hamiltonian or a unitary")

    @property
    def system(self) -> Basis:
        return self.ext.system

    @property
    def d_sys(self) -> int:
        return self.ext.system.dim

    @property
    def d_ext(self) -> int:
        return self.ext.dim

    def columns(self) -> np.ndarray:
        return operator_columns(self.d_sys, self.charges)

    def digest(self) -> str:
        extra = self.setup if self.noise is None else f"{self.setup}|{self.noise}"
        return config_hash(self.ext, self.hamiltonian, self.time, self.anc_state, self.unitary,
                           self.columns(), extra)

    def evolved_inputs(self) -> np.ndarray:
        """Columns U|k, phi> for every system basis state k."""
        iso = self.ext.product_state(self.anc_state)
        if self.unitary is not None:
            return np.asarray(self.unitary) @ iso
        return evolve(self.hamiltonian, iso, self.time, kind="columns")


@dataclass
class ScramblingMap:
    """S restricted to ``columns``; stores the amplitude table when noiseless."""
    d_sys: int
    d_ext: int
    columns: np.ndarray
    amplitudes: np.ndarray | None = None
    dense: np.ndarray | None = None
    config_hash: str = ""
    ext: Basis | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def full_columns(self) -> bool:
        return self.n_columns == self.d_sys * self.d_sys

    def povm(self) -> np.ndarray:
        """Rows are the vectors |S_z>."""
        if self.amplitudes is None:
            raise ValueError("noisy maps have no rank-one POVM vectors")
        return self.amplitudes.conj()

    def nbytes(self) -> int:
        return 16 * self.d_ext * self.n_columns

    def matrix(self, budget_mb: float | None = DEFAULT_BUDGET_MB) -> np.ndarray:
        """Materialize S (d_ext x n_columns)."""
        if self.dense is not None:
            return self.dense
        if budget_mb is not None and self.nbytes() > budget_mb * 2**20:
            raise MapBudgetError(
                f"S needs {self.nbytes() / 2**20:.0f} MB, above the {budget_mb} MB budget; "
                "use a patched setup or raise the budget")
        k, l = np.divmod(self.columns, self.d_sys)
        a = self.amplitudes
        return a[:, k] * a[:, l].conj()

    def vec(self, op: np.ndarray) -> np.ndarray:
        """Vectorize a system operator onto the kept columns."""
        op = np.asarray(op.toarray() if sp.issparse(op) else op)
        return op.reshape(-1)[self.columns]

    def unvec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.d_sys * self.d_sys, dtype=complex)
        out[self.columns] = v
        return out.reshape(self.d_sys, self.d_sys)

    def born(self, rho: np.ndarray) -> np.ndarray:
        return born_distribution(self, rho)


def build_scrambling_map(config: QuenchConfig, budget_mb: float | None = None) -> ScramblingMap:
    """Noiseless map of a quench configuration."""
    cols = config.columns()
    if budget_mb is not None and 16 * config.d_ext * len(cols) > budget_mb * 2**20:
        raise MapBudgetError("scrambling map exceeds the memory budget; consider a patched setup")
    if config.noise is not None:
        return build_noisy_scrambling_map(config)
    amps = config.evolved_inputs()
    return ScramblingMap(config.d_sys, config.d_ext, cols, amplitudes=amps,
                         config_hash=config.digest(), ext=config.ext,
                         meta={"setup": config.setup, "time": config.time, "label": config.label})


def povm_vectors(config: QuenchConfig) -> np.ndarray:
    """|S_z> = (I (x) <phi|) U^dagger |z>, one row per extended basis state."""
    return config.evolved_inputs().conj()


def born_distribution(smap: ScramblingMap, rho: np.ndarray, renormalize: bool = True) -> np.ndarray:
    """Outcome probabilities for a system density matrix."""
    rho = np.asarray(rho.toarray() if sp.issparse(rho) else rho, dtype=complex)
    if rho.shape != (smap.d_sys, smap.d_sys):
        raise DistributionError("density matrix does not live on the map's system basis")
    if smap.amplitudes is not None:
        a = smap.amplitudes
        p = np.einsum("zk,kl,zl->z", a, rho, a.conj(), optimize=True)
    else:
        p = smap.dense @ rho.reshape(-1)[smap.columns]
    if np.max(np.abs(p.imag), initial=0.0) > 1e-8:
        raise DistributionError("probabilities have a sizeable imaginary part")
    p = p.real
    if p.min(initial=0.0) < NEG_CLIP:
        raise DistributionError(f"negative probability {p.min():.3e}: invalid state or broken map")
    p = np.clip(p, 0.0, None)
    if renormalize:
        p = p / p.sum()
    return p


def depolarized_map(smap: ScramblingMap, gamma_t: float) -> ScramblingMap:
    """Closed-form map under global depolarizing noise of strength gamma*t.

    P_gamma = exp(-gamma t) P + (1 - exp(-gamma t)) / d_ext.
    """
    s0 = smap.matrix(None)
    decay = math.exp(-gamma_t)
    ident = np.eye(smap.d_sys, dtype=complex).reshape(-1)[smap.columns]
    dense = decay * s0 + (1 - decay) / smap.d_ext * np.ones((smap.d_ext, 1)) * ident[None, :]
    return ScramblingMap(smap.d_sys, smap.d_ext, smap.columns, dense=dense,
                         config_hash=smap.config_hash + f"|depol{gamma_t!r}", ext=smap.ext,
                         meta=dict(smap.meta, noise="global-depolarizing", gamma_t=gamma_t))


def dephasing_factors(ext: Basis, sites: Sequence[int] | None = None) -> np.ndarray:
    """Matrix D with (E_p rho) = (1-p) rho + p D * rho (elementwise).

    D[x, y] = (1/n) sum_i z_i(x) z_i(y) with z = +-1 the Pauli-Z eigenvalue.
    """
    sites = list(range(ext.n_sites)) if sites is None else list(sites)
    z = 2.0 * ext.configs[:, sites].astype(float) - 1.0
    return (z @ z.T) / len(sites)


def _dephased_evolution(u_step: np.ndarray, d: np.ndarray, p: float, rho: np.ndarray, steps: int) -> np.ndarray:
    w = (1 - p) + p * d
    for _ in range(steps):
        rho = w * (u_step @ rho @ u_step.conj().T)
    return rho


def noisy_born_distribution(config: QuenchConfig, rho_sys: np.ndarray) -> np.ndarray:
    """Exact outcome distribution of one system state under the Trotterized noisy channel."""
    noise = config.noise
    if noise is None or noise.kind != "local-dephasing":
        raise ValueError("needs a local-dephasing channel")
    iso = config.ext.product_state(config.anc_state)
    rho = iso @ rho_sys @ iso.conj().T
    n = noise.trotter_steps(config.time)
    u = propagator(config.hamiltonian, config.time / n)
    d = dephasing_factors(config.ext, noise.sites)
    out = _dephased_evolution(u, d, noise.rate * config.time / n, rho, n)
    p = np.clip(np.diag(out).real, 0.0, None)
    return p / p.sum()


def build_noisy_scrambling_map(config: QuenchConfig, chunk: int = 64) -> ScramblingMap:
    """Map under the configured noise channel.

    Local dephasing is Trotterized: [E_{gamma t/N} o U_{t/N}]^N applied to every
    input |k><l| (x) |phi><phi|.  Global depolarizing uses its closed form.
    """
    noise = config.noise
    cols = config.columns()
    if noise.kind == "global-depolarizing":
        clean = build_scrambling_map(QuenchConfig(config.ext, config.anc_state, config.hamiltonian,
                                                  config.time, config.unitary, config.charges,
                                                  config.setup, None, config.label))
        return depolarized_map(clean, noise.rate * config.time)
    if noise.kind != "local-dephasing":
        raise ValueError(f"unsupported noise kind {noise.kind!r}")
    if config.ext.kind not in ("qubit", "blockaded"):
        raise ValueError("dephasing noise is implemented for qubit registers only")
    iso = config.ext.product_state(config.anc_state)
    n = noise.trotter_steps(config.time)
    u = propagator(config.hamiltonian, config.time / n) if config.unitary is None else None
    if u is None:
        raise ValueError("noisy maps need a Hamiltonian to Trotterize")
    d = dephasing_factors(config.ext, noise.sites)
    p = noise.rate * config.time / n
    w = (1 - p) + p * d
    ks, ls = np.divmod(cols, config.d_sys)
    dense = np.zeros((config.d_ext, len(cols)), dtype=complex)
    for start in range(0, len(cols), chunk):
        sl = slice(start, start + chunk)
        batch = iso[:, ks[sl]].T[:, :, None] * iso[:, ls[sl]].T.conj()[:, None, :]
        for _ in range(n):
            batch = w[None] * (u[None] @ batch @ u.conj().T[None])
        dense[:, sl] = np.einsum("bzz->zb", batch)
    return ScramblingMap(config.d_sys, config.d_ext, cols, dense=dense, config_hash=config.digest(),
                         ext=config.ext, meta={"setup": config.setup, "noise": noise.kind,
                                               "gamma_t": noise.rate * config.time, "trotter_steps": n})


# ---------------------------------------------------------------------------
# patched setups
# ---------------------------------------------------------------------------

@dataclass
class Patch:
    """One patch: system sites (in the full system numbering) and their map.

    ``smap`` None means the patch sites are read out directly in the
    configuration basis without any quench.
    """
    sites: tuple
    basis: Basis
    smap: ScramblingMap | None = None

    @property
    def n_outcomes(self) -> int:
        return self.basis.dim if self.smap is None else self.smap.d_ext

    def amplitudes(self) -> np.ndarray:
        if self.smap is None:
            return np.eye(self.basis.dim, dtype=complex)
        return self.smap.amplitudes


@dataclass
class PatchedMap:
    """Composite handle over disjoint patches; never forms the global product."""
    system: Basis
    patches: list

    def __post_init__(self):
        seen = set()
        for p in self.patches:
            s = set(p.sites)
            if s & seen:
                raise ValueError("patches overlap")
            seen |= s
            if p.smap is not None and p.smap.d_sys != p.basis.dim:
                raise ValueError("patch map does not match its basis")
        if seen != set(range(self.system.n_sites)):
            raise ValueError("patches must cover every system site")

    @property
    def shape(self) -> tuple:
        return tuple(p.n_outcomes for p in self.patches)

    def embedding(self) -> np.ndarray:
        """Per system config, the tuple of patch-basis ordinals (-1 if not representable)."""
        out = np.empty((self.system.dim, len(self.patches)), dtype=np.int64)
        for j, p in enumerate(self.patches):
            cols = self.system.site_modes(p.sites)
            out[:, j] = p.basis.indices(self.system.configs[:, cols])
        return out

    def materialize(self, max_dim: int = 4096) -> ScramblingMap:
        """Global amplitude table at oracle scale, outcomes in row-major patch order."""
        if np.prod(self.shape) > max_dim:
            raise MapBudgetError("global patched map too large to materialize")
        if self.system.kind == "fermion":
            raise ValueError("fermionic patch products need sign bookkeeping; not materialized")
        emb = self.embedding()
        if np.any(emb < 0):
            raise ValueError("system configurations outside the patch product")
        amps = np.ones((1, self.system.dim), dtype=complex)
        for j, p in enumerate(self.patches):
            a = p.amplitudes()[:, emb[:, j]]
            amps = (amps[:, None, :] * a[None, :, :]).reshape(-1, self.system.dim)
        d_ext = amps.shape[0]
        return ScramblingMap(self.system.dim, d_ext, np.arange(self.system.dim ** 2), amplitudes=amps)


# ---------------------------------------------------------------------------
# controlled-unitary ensembles
# ---------------------------------------------------------------------------

def controlled_unitary_map(unitaries: Sequence[np.ndarray], tol: float = 1e-10) -> ScramblingMap:
    """Map of U = sum_a U_a (x) |a><a| with a uniform ancilla superposition.

    Outcomes are ordered z = s * mu + a.  |S_(s,a)> = U_a^dagger |s> / sqrt(mu).
    """
    us = np.asarray(unitaries, dtype=complex)
    mu, d, _ = us.shape
    for u in us:
        if np.max(np.abs(u.conj().T @ u - np.eye(d))) > tol:
            raise ValueError("ensemble member is not unitary")
    # A[(s, a), k] = <s|U_a|k> / sqrt(mu)
    amps = np.transpose(us, (1, 0, 2)).reshape(d * mu, d) / np.sqrt(mu)
    return ScramblingMap(d, d * mu, np.arange(d * d), amplitudes=amps,
                         meta={"setup": "controlled-unitary", "ensemble_size": mu})


def clifford_group(n_qubits: int) -> np.ndarray:
    """All n-qubit Clifford unitaries modulo global phase (n = 1: 24, n = 2: 11520)."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    s = np.diag([1, 1j])
    eye = np.eye(2)
    gens = []
    for q in range(n_qubits):
        for g in (h, s):
            m = np.array([[1.0]])
            for r in range(n_qubits):
                m = np.kron(m, g if r == q else eye)
            gens.append(m)
    if n_qubits == 2:
        cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
        gens.append(cnot)
    elif n_qubits > 2:
        raise ValueError("only one- and two-qubit Clifford groups are generated")

    def key(u):
        flat = u.ravel()
        k = np.flatnonzero(np.abs(flat) > 1e-8)[0]
        v = flat * np.exp(-1j * np.angle(flat[k]))
        # adding 0.0 folds -0.0 into 0.0 so equal matrices share a key
        return (np.round(v, 6) + 0.0).tobytes()

    d = 2 ** n_qubits
    start = np.eye(d, dtype=complex)
    seen = {key(start): start}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                w = g @ u
                k = key(w)
                if k not in seen:
                    seen[k] = w
                    nxt.append(w)
        frontier = nxt
    return np.array(list(seen.values()))
