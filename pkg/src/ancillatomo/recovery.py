"""Left inverses of scrambling maps and single-shot estimators.

Every recovery map here is R = (S^dagger G S)^{-1} S^dagger G for a positive
diagonal weight G: G = I gives the Moore-Penrose inverse and G = diag(1/Pbar)
the frame that minimizes the estimator variance under the reference
distribution Pbar.  Both are computed from one economic QR factorization of
G^{1/2} S = Q T, so that

    R = T^{-1} Q^dagger G^{1/2},
    o = conj(G^{1/2} Q T^{-dagger} vec(O^dagger)),   o_z = Tr(O rho_hat_z),

where rho_hat_z is the snapshot R|z> reshaped into a matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .scrambling import ScramblingMap, born_distribution

RANK_TOL = 1e-10


class IncompleteMapError(np.linalg.LinAlgError):
    """The scrambling map is not injective; carries the completeness report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _op_array(op) -> np.ndarray:
    return np.asarray(op.toarray() if sp.issparse(op) else op, dtype=complex)


def _triangular_extremes(t: np.ndarray, iters: int = 30) -> tuple[float, float]:
    """Largest and smallest singular values of an upper-triangular matrix."""
    n = t.shape[0]
    if n <= 1200:
        s = sla.svdvals(t)
        return float(s[0]), float(s[-1])
    rng = np.random.default_rng(0)
    v = rng.normal(size=n) + 0j
    for _ in range(iters):
        v = t.conj().T @ (t @ v)
        v /= np.linalg.norm(v)
    smax = math.sqrt(np.linalg.norm(t.conj().T @ (t @ v)))
    # inverse iteration for the smallest singular value
    w = rng.normal(size=n) + 0j
    for _ in range(iters):
        w = sla.solve_triangular(t, sla.solve_triangular(t, w, trans="C"))
        w /= np.linalg.norm(w)
    smin = np.linalg.norm(t @ w)
    return float(smax), float(smin)


@dataclass
class RecoveryMap:
    flavor: str
    smap: ScramblingMap
    q: np.ndarray
    t: np.ndarray
    sqrt_weights: np.ndarray
    sigma_max: float
    sigma_min: float
    reference: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def d_ext(self) -> int:
        return self.smap.d_ext

    def _solve(self, w: np.ndarray) -> np.ndarray:
        # y = G^{1/2} Q T^{-dagger} w
        x = sla.solve_triangular(self.t, w, trans="C")
        y = self.q @ x
        return self.sqrt_weights[:, None] * y if y.ndim == 2 else self.sqrt_weights * y

    def estimator(self, op) -> np.ndarray:
        """Single-shot values o_z for one operator (or a stack of operators)."""
        ops = _op_array(op)
        single = ops.ndim == 2
        ops = ops[None] if single else ops
        w = np.stack([self.smap.vec(o.conj().T) for o in ops], axis=1)
        o = self._solve(w).conj()
        return o[:, 0] if single else o

    def estimator_from_vec(self, w: np.ndarray) -> np.ndarray:
        """o for a given restricted vec(O^dagger)."""
        return self._solve(w).conj()

    def matrix(self) -> np.ndarray:
        """Explicit R (n_columns x d_ext)."""
        r = sla.solve_triangular(self.t, self.q.conj().T)
        return r * self.sqrt_weights[None, :]

    def snapshot(self, z: int) -> np.ndarray:
        """rho_hat_z = R|z> as a system matrix."""
        col = sla.solve_triangular(self.t, self.q[z].conj()) * self.sqrt_weights[z]
        return self.smap.unvec(col)

    def reconstruct(self, weights: np.ndarray) -> np.ndarray:
        """R applied to an outcome histogram (normalized), Hermitian part kept."""
        p = np.asarray(weights, dtype=float)
        p = p / p.sum()
        vec = sla.solve_triangular(self.t, self.q.conj().T @ (self.sqrt_weights * p))
        rho = self.smap.unvec(vec)
        return (rho + rho.conj().T) / 2

    def identity_defect(self) -> float:
        """max |R S - I| over entries."""
        rs = self.matrix() @ self.smap.matrix(None)
        return float(np.max(np.abs(rs - np.eye(rs.shape[0]))))


def _factorize(smap: ScramblingMap, sqrt_w: np.ndarray, flavor: str, tol: float,
               reference=None) -> RecoveryMap:
    s = smap.matrix(None)
    a = sqrt_w[:, None] * s
    if a.shape[0] < a.shape[1]:
        raise IncompleteMapError(f"{a.shape[0]} outcomes cannot resolve {a.shape[1]} operator components")
    q, t = sla.qr(a, mode="economic", overwrite_a=True, check_finite=False)
    smax, smin = _triangular_extremes(t)
    if smin <= tol * smax:
        from .diagnostics import singular_spectrum
        report = singular_spectrum(smap) if smap.n_columns <= 2500 else None
        raise IncompleteMapError(
            f"scrambling map is not tomographically complete (sigma_min/sigma_max = {smin / smax:.2e})", report)
    return RecoveryMap(flavor, smap, q, t, sqrt_w, smax, smin, reference)


def moore_penrose(smap: ScramblingMap, tol: float = RANK_TOL) -> RecoveryMap:
    """R = (S^dagger S)^{-1} S^dagger through a QR factorization of S."""
    return _factorize(smap, np.ones(smap.d_ext), "moore-penrose", tol)


def gamma_floor(d_ext: int) -> float:
    return 1e-12 / d_ext


def optimal_recovery(smap: ScramblingMap, reference: np.ndarray, tol: float = RANK_TOL) -> RecoveryMap:
    """R = (S^dagger G S)^{-1} S^dagger G with G = diag(1/Pbar)."""
    pbar = np.asarray(reference, dtype=float)
    if pbar.shape != (smap.d_ext,):
        raise ValueError("reference distribution has the wrong length")
    if np.any(pbar < 0):
        raise ValueError("reference distribution has negative entries")
    pbar = np.maximum(pbar / pbar.sum(), gamma_floor(smap.d_ext))
    return _factorize(smap, 1.0 / np.sqrt(pbar), "gamma-optimal", tol, reference=pbar)


def uniform_prior(smap: ScramblingMap) -> np.ndarray:
    """Outcome distribution of the maximally mixed system state."""
    return born_distribution(smap, np.eye(smap.d_sys) / smap.d_sys)


def recovery_for(smap: ScramblingMap, flavor: str = "gamma-optimal", reference=None,
                 tol: float = RANK_TOL) -> RecoveryMap:
    if flavor == "moore-penrose":
        return moore_penrose(smap, tol)
    if flavor == "gamma-optimal":
        return optimal_recovery(smap, uniform_prior(smap) if reference is None else reference, tol)
    raise ValueError(f"unknown recovery flavor {flavor!r}")


def explicit_pseudo_inverse(s: np.ndarray) -> np.ndarray:
    """(S^dagger S)^{-1} S^dagger by normal equations; an independent oracle route."""
    g = s.conj().T @ s
    return np.linalg.solve(g, s.conj().T)


# ---------------------------------------------------------------------------
# estimator tables
# ---------------------------------------------------------------------------

@dataclass
class EstimatorTable:
    values: np.ndarray
    flavor: str
    label: str = ""
    config_hash: str = ""

    def mean(self, p: np.ndarray) -> complex:
        return complex(np.dot(p, self.values))

    def variance(self, p: np.ndarray) -> float:
        return variance(self.values, p)


def estimator_for(op, recovery: RecoveryMap, label: str = "") -> EstimatorTable:
    return EstimatorTable(recovery.estimator(op), recovery.flavor, label, recovery.smap.config_hash)


def variance(o: np.ndarray, p: np.ndarray) -> float:
    """Var[o] = sum P |o|^2 - |sum P o|^2 (clipped at zero)."""
    o = np.asarray(o)
    p = np.asarray(p, dtype=float)
    if o.shape[0] != p.shape[0]:
        raise ValueError("estimator and distribution lengths differ")
    m = np.dot(p, o)
    second = np.dot(p, np.abs(o) ** 2)
    return float(max(second - np.abs(m) ** 2, 0.0)) if o.ndim == 1 else np.maximum(second - np.abs(m) ** 2, 0.0)


# ---------------------------------------------------------------------------
# noise-corrected and analytic inverses
# ---------------------------------------------------------------------------

def depolarizing_recovery_matrix(r0: np.ndarray, gamma_t: float) -> np.ndarray:
    """R_gamma = e^{gamma t} R0 [I - (1 - e^{-gamma t}) J/d_ext], J the all-ones matrix."""
    d_ext = r0.shape[1]
    c = 1.0 - math.exp(-gamma_t)
    return math.exp(gamma_t) * (r0 - (c / d_ext) * r0.sum(axis=1, keepdims=True) * np.ones((1, d_ext)))


def depolarizing_estimator(o0: np.ndarray, gamma_t: float) -> np.ndarray:
    """Single-shot values of R_gamma for an observable with noiseless values o0."""
    c = 1.0 - math.exp(-gamma_t)
    return math.exp(gamma_t) * (o0 - c * np.mean(o0, axis=0))


def analytic_design_inverse(n_qubits: int, ensemble_size: int = 1) -> np.ndarray:
    """(S^dagger S)^{-1} of a controlled 2-design ensemble.

    Entry ((b,c),(d,e)) = mu [(2^n + 1) delta_bd delta_ce - delta_bc delta_de];
    ``ensemble_size`` mu accounts for the uniform ancilla superposition.
    """
    if n_qubits > 4:
        raise ValueError("analytic inverse limited to at most four qubits")
    d = 2 ** n_qubits
    ident = np.eye(d * d)
    vec_i = np.eye(d).reshape(-1)
    return ensemble_size * ((d + 1) * ident - np.outer(vec_i, vec_i))
