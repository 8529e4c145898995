"""Completeness, symmetry null spaces, noise error bounds and quench-time scans."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .hamiltonians import SpectralPropagator
from .recovery import IncompleteMapError, optimal_recovery, variance
from .scrambling import ScramblingMap, born_distribution

COMPLETE_TOL = 1e-10


@dataclass
class CompletenessReport:
    singular_values: np.ndarray
    tol: float
    columns: np.ndarray
    d_sys: int
    null_space: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), complex))

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0]) if len(self.singular_values) else 0.0

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1]) if len(self.singular_values) else 0.0

    @property
    def ratio(self) -> float:
        return self.sigma_min / self.sigma_max if self.sigma_max > 0 else 0.0

    @property
    def condition_number(self) -> float:
        return math.inf if self.sigma_min == 0 else self.sigma_max / self.sigma_min

    @property
    def complete(self) -> bool:
        return self.ratio > self.tol

    @property
    def null_dim(self) -> int:
        return self.null_space.shape[0]

    def null_operators(self) -> np.ndarray:
        """Null-space vectors as d_sys x d_sys matrices."""
        out = np.zeros((self.null_dim, self.d_sys * self.d_sys), dtype=complex)
        out[:, self.columns] = self.null_space
        return out.reshape(-1, self.d_sys, self.d_sys)

    def overlap(self, op) -> float:
        """Fraction of ||vec(op)||^2 lying in the null space."""
        op = np.asarray(op.toarray() if sp.issparse(op) else op, dtype=complex)
        v = op.reshape(-1)
        norm = np.vdot(v, v).real
        if norm == 0:
            raise ValueError("zero operator")
        restricted = v[self.columns]
        outside = norm - np.vdot(restricted, restricted).real
        if self.null_dim == 0:
            proj = 0.0
        else:
            c = self.null_space.conj() @ restricted
            proj = np.vdot(c, c).real
        # components outside the kept columns are unresolvable as well
        return float((proj + outside) / norm)

    def to_dict(self) -> dict:
        return {"sigma_max": self.sigma_max, "sigma_min": self.sigma_min, "ratio": self.ratio,
                "condition_number": self.condition_number, "complete": self.complete,
                "null_dim": self.null_dim, "tol": self.tol,
                "singular_values": [float(s) for s in self.singular_values]}


def singular_spectrum(smap: ScramblingMap | np.ndarray, tol: float = COMPLETE_TOL) -> CompletenessReport:
    """Full SVD of S with the null space (relative cutoff ``tol``)."""
    if isinstance(smap, ScramblingMap):
        s_mat, cols, d_sys = smap.matrix(None), smap.columns, smap.d_sys
    else:
        s_mat = np.asarray(smap)
        d_sys = int(round(math.sqrt(s_mat.shape[1])))
        cols = np.arange(s_mat.shape[1])
    _, sv, vh = np.linalg.svd(s_mat, full_matrices=True)
    n = s_mat.shape[1]
    full = np.zeros(n)
    full[: len(sv)] = sv
    cut = tol * (full[0] if n else 0.0)
    null = vh[full <= cut] if n else np.zeros((0, 0), complex)
    return CompletenessReport(full, tol, np.asarray(cols), d_sys, null.conj())


def null_space_symmetry(report: CompletenessReport, charges: Sequence) -> dict:
    """How much of the null space is block off-diagonal between charge sectors.

    ``charges`` labels every system basis state (scalar or tuple).  Returns the
    per-vector off-diagonal weight and the fraction of the null space they
    explain.
    """
    q = np.asarray(charges)
    if q.ndim == 2:
        _, q = np.unique(q, axis=0, return_inverse=True)
        q = q.ravel()
    k, l = np.divmod(report.columns, report.d_sys)
    off = q[k] != q[l]
    if report.null_dim == 0:
        return {"weights": np.zeros(0), "fraction": 1.0, "symmetric_dim": 0}
    weights = np.sum(np.abs(report.null_space[:, off]) ** 2, axis=1)
    # dimension of the null space inside the off-diagonal subspace
    proj = report.null_space[:, off]
    sym_dim = float(np.sum(np.linalg.svd(proj, compute_uv=False) ** 2))
    return {"weights": weights, "fraction": sym_dim / report.null_dim,
            "symmetric_dim": int(round(sym_dim)), "offdiagonal_columns": int(off.sum())}


def otoc_completeness_witness(delta_rho, ext, anc_state: np.ndarray, unitary: np.ndarray) -> float:
    """sum_z 4 |<z| U (drho (x) |phi><phi|) U^dagger |z>|^2.

    Zero exactly when the system perturbation leaves no trace in the outcome
    distribution.
    """
    d = np.asarray(delta_rho.toarray() if sp.issparse(delta_rho) else delta_rho, dtype=complex)
    if abs(np.trace(d)) > 1e-10:
        raise ValueError("perturbation must be traceless")
    a = np.asarray(unitary) @ ext.product_state(anc_state)
    diag = np.einsum("zk,kl,zl->z", a, d, a.conj())
    return float(4 * np.sum(np.abs(diag) ** 2))


def systematic_error_bound(table, gamma: float, t: float, d_ext: int | None = None) -> float:
    """gamma t sqrt(sum_z |o_z|^2 / d_ext)."""
    o = np.asarray(getattr(table, "values", table))
    d_ext = len(o) if d_ext is None else d_ext
    return float(gamma * t * math.sqrt(np.sum(np.abs(o) ** 2) / d_ext))


def random_rank_k_observable(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Projector onto a Haar-random k-dimensional subspace."""
    if not 1 <= k <= d:
        raise ValueError("rank out of range")
    z = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    q, _ = np.linalg.qr(z)
    return q @ q.conj().T


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

@dataclass
class ChainFamily:
    """Boundary-coupled blockaded chain: system blocks embedded among ancillas.

    ``layout`` lists block lengths alternating ancilla/system, starting and
    ending with ancilla blocks (zero allowed).  One boundary: (0, N, n_anc).
    """
    layout: tuple
    hamiltonian_params: object = None

    def sites(self) -> tuple[list[int], list[int]]:
        sys_sites, anc_sites, pos = [], [], 0
        for i, length in enumerate(self.layout):
            (anc_sites if i % 2 == 0 else sys_sites).extend(range(pos, pos + length))
            pos += length
        return sys_sites, anc_sites

    @property
    def boundaries(self) -> int:
        inner = [b for b in self.layout]
        count = 0
        for i in range(len(inner) - 1):
            if inner[i] > 0 and inner[i + 1] > 0:
                count += 1
        return count


def chain_setup(family: ChainFamily):
    """Extended basis, quench Hamiltonian and ancilla state for a chain family."""
    from .hamiltonians import RydbergParams, rydberg_hamiltonian
    from .hilbert import blockaded_basis, tensor_extend

    sys_sites, anc_sites = family.sites()
    n = len(sys_sites) + len(anc_sites)
    new = {s: i for i, s in enumerate(sys_sites)}
    new.update({s: len(sys_sites) + i for i, s in enumerate(anc_sites)})
    edges = [(new[i], new[i + 1]) for i in range(n - 1)]
    ns = len(sys_sites)
    sys_e = [e for e in edges if e[0] < ns and e[1] < ns]
    anc_e = [(a - ns, b - ns) for a, b in edges if a >= ns and b >= ns]
    seam = [e for e in edges if (e[0] < ns) != (e[1] < ns)]
    sysb = blockaded_basis(ns, sys_e)
    ancb = blockaded_basis(len(anc_sites), anc_e)
    ext = tensor_extend(sysb, ancb, seam)
    params = family.hamiltonian_params or RydbergParams(1.0, -1.0, 0.0)
    phi = np.zeros(ancb.dim, dtype=complex)
    phi[ancb.index(np.zeros(ancb.n_sites, dtype=np.uint8))] = 1.0
    return ext, rydberg_hamiltonian(ext, params), phi, rydberg_hamiltonian(sysb, params)


def lieb_robinson_scan(families: dict, times: Sequence[float], rho_for: Callable | None = None,
                       threshold: float = 1.5, stop_early: bool = False) -> tuple[list[dict], dict]:
    """Fidelity-estimator variance vs quench time for each chain family.

    ``families`` maps a key (for instance (N, boundaries)) to a ChainFamily.
    The observed state is the system ground state by default and the
    observable its own projector.  Returns rows (key, t, var) and t*(key),
    the first time with variance at or below ``threshold``.  With
    ``stop_early`` a family stops at its t*.
    """
    from .hamiltonians import ground_state

    rows, tstar = [], {}
    for key, fam in families.items():
        ext, h, phi, h_sys = chain_setup(fam)
        if rho_for is None:
            psi = ground_state(h_sys).vector
            rho = np.outer(psi, psi.conj())
        else:
            rho = rho_for(ext.system)
        prop = SpectralPropagator(h)
        iso = ext.product_state(phi)
        tstar[key] = math.inf
        for t in times:
            amps = prop.apply(iso, t)
            smap = ScramblingMap(ext.system.dim, ext.dim, np.arange(ext.system.dim ** 2), amplitudes=amps)
            p = born_distribution(smap, rho)
            try:
                rec = optimal_recovery(smap, p)
                var = variance(rec.estimator(rho), p)
            except IncompleteMapError:
                var = math.inf
            rows.append({"key": key, "t": float(t), "var": float(var)})
            if var <= threshold and tstar[key] == math.inf:
                tstar[key] = float(t)
                if stop_early:
                    break
    return rows, tstar


def noise_variance_scan(clean: ScramblingMap, noisy_for: Callable[[float], ScramblingMap],
                        rho: np.ndarray, observables: Sequence, gamma_ts: Sequence[float],
                        recovery_for: Callable | None = None) -> tuple[list[dict], float]:
    """Variance ratio of noise-aware estimators relative to the noiseless one.

    ``noisy_for(gamma_t)`` returns the noisy map, inverted with
    ``recovery_for`` (Moore-Penrose by default).  The slope of the mean
    log ratio against gamma t is returned alongside the rows.
    """
    from .recovery import moore_penrose

    recovery_for = recovery_for or moore_penrose
    base = recovery_for(clean)
    p0 = born_distribution(clean, rho)
    v0 = [variance(base.estimator(o), p0) for o in observables]
    rows = []
    for g in gamma_ts:
        smap = clean if g == 0 else noisy_for(g)
        rec = base if g == 0 else recovery_for(smap)
        p = born_distribution(smap, rho)
        for i, o in enumerate(observables):
            v = variance(rec.estimator(o), p)
            rows.append({"gamma_t": float(g), "observable": i, "var": v, "ratio": v / v0[i]})
    g = np.array([r["gamma_t"] for r in rows])
    lr = np.log([r["ratio"] for r in rows])
    slope = float(np.polyfit(g, lr, 1)[0]) if len(set(g)) > 1 else 0.0
    return rows, slope


def fit_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])
