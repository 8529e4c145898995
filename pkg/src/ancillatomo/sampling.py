"""Snapshot simulation, estimators with error bars, and snapshot files."""
from __future__ import annotations

import itertools
import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import Basis, _reorder_signs, partial_trace
from .scrambling import PatchedMap

NORM_TOL = 1e-8
PAIR_LIMIT = 2_000_000
MAGIC = b"ATSN"
VERSION = 1


class SamplingError(ValueError):
    pass


class SnapshotFormatError(ValueError):
    pass


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    outcomes: np.ndarray
    seed: int = 0
    config_hash: str = ""
    shape: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        out = np.asarray(self.outcomes, dtype=np.int64)
        out.setflags(write=False)
        object.__setattr__(self, "outcomes", out)
        if self.shape:
            dims = np.asarray(self.shape)
            cols = out if out.ndim == 2 else out[:, None]
            if cols.shape[1] != len(dims) or np.any(cols < 0) or np.any(cols >= dims[None, :]):
                raise SamplingError("outcome ordinals outside the declared dimensions")

    @property
    def m(self) -> int:
        return int(self.outcomes.shape[0])

    @property
    def patched(self) -> bool:
        return self.outcomes.ndim == 2

    def __eq__(self, other):
        return (isinstance(other, SnapshotSet) and np.array_equal(self.outcomes, other.outcomes)
                and self.seed == other.seed and self.config_hash == other.config_hash
                and tuple(self.shape) == tuple(other.shape))

    def column(self, j: int) -> np.ndarray:
        return self.outcomes[:, j] if self.patched else self.outcomes

    def split(self, size: int) -> list["SnapshotSet"]:
        """Consecutive disjoint subsets of ``size`` snapshots."""
        return [SnapshotSet(self.outcomes[i:i + size], self.seed, self.config_hash, self.shape,
                            dict(self.meta, subset=i // size))
                for i in range(0, self.m - size + 1, size)]


@dataclass
class EstimateResult:
    value: complex
    stderr: float
    m: int
    flavor: str = ""
    label: str = ""
    stderr_re: float = 0.0
    stderr_im: float = 0.0
    flagged: bool = False

    def within(self, exact: complex, n_sigma: float = 3.0) -> bool:
        return abs(self.value - exact) <= n_sigma * self.stderr

    def to_dict(self) -> dict:
        v = complex(self.value)
        return {"label": self.label, "re": v.real, "im": v.imag, "stderr": self.stderr,
                "stderr_re": self.stderr_re, "stderr_im": self.stderr_im, "m": self.m,
                "flavor": self.flavor, "flagged": self.flagged}


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _check_distribution(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise SamplingError("probabilities must be a non-empty vector")
    if np.any(p < 0):
        raise SamplingError("negative probability")
    if abs(p.sum() - 1) > NORM_TOL:
        raise SamplingError(f"probabilities sum to {p.sum():.12f}")
    return p


def inverse_cdf(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p)
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    idx = np.minimum(idx, len(p) - 1)
    # never land on a zero-probability entry through rounding at the top end
    bad = p[idx] == 0
    if bad.any():
        nz = np.flatnonzero(p)
        idx[bad] = nz[np.searchsorted(nz, idx[bad]).clip(max=len(nz) - 1)]
    return idx


def sample_snapshots(p: np.ndarray, m: int, seed: int, stream: int = 0, config_hash: str = "") -> SnapshotSet:
    """m i.i.d. outcomes from P by inverse-CDF sampling."""
    p = _check_distribution(p)
    if m < 1:
        raise SamplingError("need m >= 1")
    u = make_rng(seed, stream).random(m)
    return SnapshotSet(inverse_cdf(p, u), seed, config_hash, (len(p),), {"stream": stream})


class _LevelPlan:
    """Index bookkeeping for sequential sampling over patches."""

    def __init__(self, emb: np.ndarray):
        n, p = emb.shape
        self.levels = []
        # ids of the distinct remaining-patch tuples at every level
        per_level = []
        for j in range(p + 1):
            rest = emb[:, j:]
            if j == p:
                per_level.append((np.zeros(n, dtype=np.int64), 1))
            else:
                _, inv = np.unique(rest, axis=0, return_inverse=True)
                inv = inv.ravel()
                per_level.append((inv, int(inv.max()) + 1))
        self.start_ids, self.start_n = per_level[0]
        for j in range(p):
            inv, nj = per_level[j]
            inv_next, nn = per_level[j + 1]
            first = np.zeros(nj, dtype=np.int64)
            first[inv] = np.arange(n)
            # every remaining tuple splits uniquely into (this patch's config, the rest)
            self.levels.append((emb[first, j], inv_next[first], nn))


def _sample_pure_patched(psi: np.ndarray, plan: _LevelPlan, amps: list, count: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Exact sampling of ``count`` patch-outcome tuples for one pure state."""
    p = len(amps)
    out = np.zeros((count, p), dtype=np.int64)
    v0 = np.zeros(plan.start_n, dtype=complex)
    np.add.at(v0, plan.start_ids, psi)
    stack = [(v0, np.arange(count), 0)]
    while stack:
        v, rows, j = stack.pop()
        local, child, nn = plan.levels[j]
        a = amps[j]
        # remaining state as a (patch config x rest) matrix; outcome weights only need its Gram matrix
        mat = sp.csr_matrix((v, (local, child)), shape=(a.shape[1], nn))
        gram = (mat @ mat.conj().T).toarray()
        w = np.maximum(np.sum((a @ gram) * a.conj(), axis=1).real, 0.0)
        total = w.sum()
        if total <= 0:
            raise SamplingError("state has no weight in the patch product")
        z = inverse_cdf(w / total, rng.random(len(rows)))
        out[rows, j] = z
        if j + 1 < p:
            for zz in np.unique(z):
                nxt = mat.T @ a[zz]
                norm = np.linalg.norm(nxt)
                stack.append((nxt / norm, rows[z == zz], j + 1))
    return out


def sample_patched(pmap: PatchedMap, state: np.ndarray, m: int, seed: int, config_hash: str = "",
                   eig_tol: float = 1e-12, discard: bool = False) -> SnapshotSet:
    """Sample joint patch outcomes without forming the product distribution.

    ``state`` is a system vector or density matrix.  Mixed states are sampled
    as an eigen-mixture.  Patch ordering fixes the outcome columns.

    System configurations that some patch basis cannot hold raise unless
    ``discard`` is set.  Then each of the m shots lands there with its Born
    weight and is dropped; the count goes to ``meta["discarded"]``.
    """
    rng = make_rng(seed, 0)
    emb = pmap.embedding()
    good = np.all(emb >= 0, axis=1)
    if not good.all() and not discard:
        raise SamplingError("system configurations outside the patch product")
    amps = [p.amplitudes() for p in pmap.patches]
    sign = None
    if pmap.system.kind == "fermion":
        order = [c for p in pmap.patches for c in pmap.system.site_modes(p.sites)]
        sign = _reorder_signs(pmap.system, order)
    plan = _LevelPlan(emb[good])
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        comps, weights = state[None, :], np.array([1.0])
    else:
        lam, vec = np.linalg.eigh(state)
        keep = lam > eig_tol
        comps, weights = vec[:, keep].T, lam[keep] / lam[keep].sum()
    comps = comps / np.linalg.norm(comps, axis=1, keepdims=True)
    kept = np.sum(np.abs(comps[:, good]) ** 2, axis=1)
    q = float(weights @ kept)
    if q <= 0:
        raise SamplingError("state has no weight on representable configurations")
    n_drop = int(rng.binomial(m, 1.0 - q)) if q < 1.0 else 0
    n_keep = m - n_drop
    cond = weights * kept / q
    which = inverse_cdf(cond, rng.random(n_keep)) if len(cond) > 1 else np.zeros(n_keep, dtype=np.int64)
    out = np.zeros((n_keep, len(amps)), dtype=np.int64)
    for c in np.unique(which):
        rows = np.flatnonzero(which == c)
        psi = comps[c] if sign is None else comps[c] * sign
        psi = psi[good] / math.sqrt(kept[c])
        out[rows] = _sample_pure_patched(psi, plan, amps, len(rows), rng)
    meta = {"patched": True}
    if discard:
        meta.update(discarded=n_drop, discarded_weight=1.0 - q)
    return SnapshotSet(out, seed, config_hash, pmap.shape, meta)


def patched_probabilities(pmap: PatchedMap, state: np.ndarray) -> np.ndarray:
    """Exact joint distribution, at oracle scale only."""
    smap = pmap.materialize()
    rho = np.outer(state, state.conj()) if np.ndim(state) == 1 else state
    from .scrambling import born_distribution
    return born_distribution(smap, rho).reshape(pmap.shape)


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _summarize(values: np.ndarray, flavor: str = "", label: str = "") -> EstimateResult:
    values = np.asarray(values)
    m = len(values)
    if m == 0:
        raise SamplingError("empty snapshot set")
    mean = values.mean()
    if m > 1:
        sre = float(np.std(values.real, ddof=1) / math.sqrt(m))
        sim = float(np.std(values.imag, ddof=1) / math.sqrt(m)) if np.iscomplexobj(values) else 0.0
    else:
        sre = sim = 0.0
    return EstimateResult(complex(mean), math.hypot(sre, sim), m, flavor, label, sre, sim)


def estimate_values(values: np.ndarray, flavor: str = "", label: str = "") -> EstimateResult:
    """Sample mean and standard error of per-snapshot values."""
    return _summarize(values, flavor, label)


def estimate_linear(table, snaps: SnapshotSet) -> EstimateResult:
    """Mean of o_z over the snapshots."""
    if snaps.m == 0:
        raise SamplingError("empty snapshot set")
    h = getattr(table, "config_hash", "")
    if h and snaps.config_hash and h != snaps.config_hash:
        raise SamplingError("estimator table and snapshots come from different maps")
    if snaps.patched:
        raise SamplingError("use estimate_patched_product for patched snapshots")
    vals = np.asarray(table.values)[snaps.outcomes]
    return _summarize(vals, getattr(table, "flavor", ""), getattr(table, "label", ""))


def estimate_patched_product(tables: dict, snaps: SnapshotSet, label: str = "") -> EstimateResult:
    """Observable that is a product over patches: o_z = prod_j o^(j)_{z_j}.

    ``tables`` maps patch position to single-shot values; patches without an
    entry contribute the identity estimator of that patch if given as
    ``None``-free dict entries, otherwise a factor of one.
    """
    vals = np.ones(snaps.m, dtype=complex)
    for j, o in tables.items():
        vals = vals * np.asarray(getattr(o, "values", o))[snaps.column(j)]
    return _summarize(vals, "patched-product", label)


def u_statistic_pairs(kernel: np.ndarray | Callable, outcomes: np.ndarray, seed: int = 0,
                      limit: int = PAIR_LIMIT) -> tuple[float, float, int]:
    """Order-2 U-statistic of a symmetric kernel over distinct pairs.

    Exhaustive when C(m,2) <= ``limit``; otherwise ``limit`` random pairs.
    Returns (value, stderr, pairs used).  The stderr uses the leading
    Hoeffding term 4 Var(h1)/m.
    """
    outcomes = np.asarray(outcomes)
    m = len(outcomes)
    if m < 2:
        raise SamplingError("need at least two snapshots")
    k = kernel if callable(kernel) else (lambda a, b: np.asarray(kernel)[a, b])
    npairs = m * (m - 1) // 2
    if npairs <= limit:
        sums = np.zeros(m, dtype=complex)
        total = 0.0 + 0.0j
        for i in range(m - 1):
            v = np.asarray(k(np.repeat(outcomes[i:i + 1], m - i - 1, axis=0), outcomes[i + 1:]))
            v = 0.5 * (v + np.asarray(k(outcomes[i + 1:], np.repeat(outcomes[i:i + 1], m - i - 1, axis=0))))
            total += v.sum()
            sums[i] += v.sum()
            sums[i + 1:] += v
        value = total / npairs
        h1 = sums / (m - 1)
        used = npairs
    else:
        rng = make_rng(seed, 7)
        a = rng.integers(0, m, size=limit)
        b = rng.integers(0, m - 1, size=limit)
        b = b + (b >= a)
        v = 0.5 * (np.asarray(k(outcomes[a], outcomes[b])) + np.asarray(k(outcomes[b], outcomes[a])))
        value = v.mean()
        sums = np.bincount(a, weights=v.real, minlength=m) + np.bincount(b, weights=v.real, minlength=m)
        counts = np.bincount(a, minlength=m) + np.bincount(b, minlength=m)
        ok = counts > 0
        h1 = sums[ok] / counts[ok]
        used = limit
    zeta = np.var(np.real(h1), ddof=1) if len(h1) > 1 else 0.0
    return complex(value), float(math.sqrt(max(4 * zeta / m, 0.0))), used


def estimate_k_copy(kernel, snaps: SnapshotSet, k: int = 2, seed: int = 0,
                    limit: int = PAIR_LIMIT) -> EstimateResult:
    """U-statistic of a k-copy kernel.

    For k = 1 ``kernel`` is an estimator table (or value vector).  For k = 2 it
    is a d_ext x d_ext matrix or a vectorized callable of two outcome arrays.
    Larger k takes a callable of k outcome arrays and enumerates k-subsets
    up to ``limit`` before subsampling.
    """
    m = snaps.m
    if m < k:
        raise SamplingError(f"need at least {k} snapshots")
    out = snaps.outcomes
    if k == 1:
        vals = np.asarray(getattr(kernel, "values", kernel))[out]
        return _summarize(vals, "k-copy", "")
    if k == 2:
        value, err, _ = u_statistic_pairs(kernel, out, seed, limit)
        return EstimateResult(value, err, m, "u-statistic")
    n_sub = math.comb(m, k)
    if n_sub <= limit:
        combos = np.array(list(itertools.combinations(range(m), k)))
    else:
        rng = make_rng(seed, 11)
        combos = np.array([np.sort(rng.choice(m, size=k, replace=False)) for _ in range(limit)])
    vals = np.zeros(len(combos), dtype=complex)
    for perm in itertools.permutations(range(k)):
        vals += np.asarray(kernel(*[out[combos[:, p]] for p in perm]))
    vals /= math.factorial(k)
    sums = np.zeros(m, dtype=complex)
    cnt = np.zeros(m)
    for c in range(k):
        np.add.at(sums, combos[:, c], vals)
        np.add.at(cnt, combos[:, c], 1)
    ok = cnt > 0
    zeta = np.var((sums[ok] / cnt[ok]).real, ddof=1)
    return EstimateResult(complex(vals.mean()), float(math.sqrt(k * k * zeta / m)), m, "u-statistic")


# ---------------------------------------------------------------------------
# Renyi-2
# ---------------------------------------------------------------------------

def reduced_snapshot_vectors(recovery, basis: Basis, keep_sites: Sequence[int],
                             outcomes: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-major vec of Tr_B(rho_hat_z) (and of its transpose) for every outcome z.

    Empty ``keep_sites`` gives the snapshot traces.
    """
    zs = np.arange(recovery.d_ext) if outcomes is None else np.asarray(outcomes)
    xs, ys = [], []
    for z in zs:
        snap = recovery.snapshot(int(z))
        if len(keep_sites) == 0:
            r = np.array([[np.trace(snap)]])
        else:
            r, _ = partial_trace(snap, basis, keep_sites)
        xs.append(r.reshape(-1))
        ys.append(r.T.reshape(-1))
    return np.array(xs), np.array(ys)


def _factor_sum(factors: list[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """sum_i w_i (x)_p F_p[i] as a dense tensor."""
    if not factors:
        return np.array(weights.sum())
    if len(factors) == 1:
        return weights @ factors[0]
    if len(factors) == 2:
        return np.einsum("i,ia,ib->ab", weights, factors[0], factors[1], optimize=True)
    acc = weights[:, None] * factors[0]
    for f in factors[1:]:
        acc = (acc[:, :, None] * f[:, None, :]).reshape(len(weights), -1)
    return acc.sum(axis=0)


def _factor_contract(factors: list[np.ndarray], weights: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """Per-sample <(x)_p F_p[i], tensor> times w_i."""
    if not factors:
        return weights * tensor
    if len(factors) == 1:
        return weights * (factors[0] @ tensor)
    if len(factors) == 2:
        return weights * np.einsum("ia,ab,ib->i", factors[0], tensor, factors[1], optimize=True)
    acc = factors[0]
    for f in factors[1:]:
        acc = (acc[:, :, None] * f[:, None, :]).reshape(len(weights), -1)
    return weights * (acc @ tensor.reshape(-1))


def swap_u_statistic(x_factors: list[np.ndarray], y_factors: list[np.ndarray]) -> tuple[float, float]:
    """Exact U-statistic of s(i, j) = prod_p <x_p(i), y_p(j)> over all ordered pairs i != j.

    Each factor list holds per-patch (m, D_p) arrays; scalar factors (D_p = 1)
    are folded into per-sample weights.  Uses
    sum_{i != j} s(i,j) = <sum_i x(i), sum_j y(j)> - sum_i s(i,i).
    """
    m = x_factors[0].shape[0]
    wx = np.ones(m, dtype=complex)
    wy = np.ones(m, dtype=complex)
    fx, fy = [], []
    for x, y in zip(x_factors, y_factors):
        if x.shape[1] == 1:
            wx = wx * x[:, 0]
            wy = wy * y[:, 0]
        else:
            fx.append(x)
            fy.append(y)
    tx = _factor_sum(fx, wx)
    ty = _factor_sum(fy, wy)
    # s(i,i)
    diag = wx * wy
    for x, y in zip(fx, fy):
        diag = diag * np.sum(x * y, axis=1)
    row = _factor_contract(fx, wx, ty) - diag      # sum_{j != i} s(i, j)
    col = _factor_contract(fy, wy, tx) - diag      # sum_{j != i} s(j, i)
    total = np.sum(row)
    value = (total / (m * (m - 1))).real
    h1 = (0.5 * (row + col) / (m - 1)).real
    err = math.sqrt(max(4 * np.var(h1, ddof=1) / m, 0.0)) if m > 1 else 0.0
    return float(value), float(err)


@dataclass
class PatchSnapshotData:
    """Per-patch ingredients for swap estimators: recovery, patch basis, global sites."""
    recovery: object
    basis: Basis
    sites: tuple


def estimate_purity(patches: Sequence[PatchSnapshotData], snaps: SnapshotSet,
                    subsystem: Sequence[int]) -> EstimateResult:
    """U-statistic estimate of Tr(rho_A^2) from (patched) snapshots."""
    a = set(int(s) for s in subsystem)
    xf, yf = [], []
    for j, pd in enumerate(patches):
        keep = [i for i, s in enumerate(pd.sites) if s in a]
        col = snaps.column(j)
        uniq, inv = np.unique(col, return_inverse=True)
        x, y = reduced_snapshot_vectors(pd.recovery, pd.basis, keep, uniq)
        xf.append(x[inv.ravel()])
        yf.append(y[inv.ravel()])
    value, err = swap_u_statistic(xf, yf)
    return EstimateResult(complex(value), err, snaps.m, "swap-u-statistic")


def estimate_renyi2(patches: Sequence[PatchSnapshotData], snaps: SnapshotSet, subsystem: Sequence[int],
                    n_sites: int | None = None, both_sides: bool = True) -> EstimateResult:
    """S2 = -log Tr(rho_A^2) using the lower-variance of the A and B swap estimators."""
    all_sites = sorted({s for pd in patches for s in pd.sites}) if n_sites is None else list(range(n_sites))
    a = sorted(set(int(s) for s in subsystem))
    b = [s for s in all_sites if s not in set(a)]
    cands = [(a, estimate_purity(patches, snaps, a))]
    if both_sides:
        cands.append((b, estimate_purity(patches, snaps, b)))
    side, best = min(cands, key=lambda c: c[1].stderr)
    pur = best.value.real
    if pur <= 0:
        return EstimateResult(complex(float("nan")), float("nan"), snaps.m, "renyi2", f"A={side}", flagged=True)
    return EstimateResult(complex(-math.log(pur)), best.stderr / pur, snaps.m, "renyi2", f"A={side}")


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

def varint_encode(values: np.ndarray) -> bytes:
    v = np.asarray(values, dtype=np.uint64).ravel()
    if v.size == 0:
        return b""
    bits = np.zeros(v.size, dtype=np.int64)
    tmp = v.copy()
    while np.any(tmp):
        bits += tmp > 0
        tmp >>= np.uint64(7)
    nbytes = np.maximum(bits, 1)
    offsets = np.concatenate([[0], np.cumsum(nbytes)[:-1]])
    out = np.zeros(int(nbytes.sum()), dtype=np.uint8)
    for b in range(int(nbytes.max())):
        sel = nbytes > b
        chunk = (v[sel] >> np.uint64(7 * b)) & np.uint64(0x7F)
        cont = (nbytes[sel] > b + 1).astype(np.uint64) << np.uint64(7)
        out[offsets[sel] + b] = (chunk | cont).astype(np.uint8)
    return out.tobytes()


def varint_decode(data: bytes, count: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    if raw.size == 0:
        if count:
            raise SnapshotFormatError("payload is empty")
        return np.zeros(0, dtype=np.int64)
    ends = np.flatnonzero((raw & 0x80) == 0)
    if len(ends) != count or ends[-1] != raw.size - 1:
        raise SnapshotFormatError("payload does not hold the declared number of outcomes")
    starts = np.concatenate([[0], ends[:-1] + 1])
    pos = np.arange(raw.size) - np.repeat(starts, ends - starts + 1)
    contrib = (raw & 0x7F).astype(np.uint64) << (7 * pos).astype(np.uint64)
    return np.bitwise_or.reduceat(contrib, starts).astype(np.int64)


def write_snapshots(path, snaps: SnapshotSet) -> None:
    """Atomic write: magic, version, header length, JSON header, varint payload."""
    payload = varint_encode(snaps.outcomes)
    header = {"m": snaps.m, "seed": int(snaps.seed), "config_hash": snaps.config_hash,
              "shape": [int(s) for s in snaps.shape], "ndim": int(snaps.outcomes.ndim),
              "crc32": zlib.crc32(payload), "meta": snaps.meta}
    hb = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC + struct.pack("<HI", VERSION, len(hb)) + hb + payload)
    tmp.replace(path)


def read_snapshots(path, expect_hash: str | None = None) -> SnapshotSet:
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:4] != MAGIC:
        raise SnapshotFormatError("not a snapshot file")
    version, hlen = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    try:
        header = json.loads(data[10:10 + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError("corrupted header") from exc
    if not isinstance(header, dict) or not {"m", "crc32", "shape", "ndim"} <= header.keys():
        raise SnapshotFormatError("corrupted header")
    payload = data[10 + hlen:]
    if zlib.crc32(payload) != header["crc32"]:
        raise SnapshotFormatError("payload checksum mismatch")
    if expect_hash is not None and header["config_hash"] != expect_hash:
        raise SnapshotFormatError("snapshots belong to a different configuration")
    ncol = len(header["shape"]) if header["ndim"] == 2 else 1
    flat = varint_decode(payload, header["m"] * ncol)
    out = flat.reshape(header["m"], ncol) if header["ndim"] == 2 else flat
    return SnapshotSet(out, header["seed"], header["config_hash"], tuple(header["shape"]), header.get("meta", {}))


def snapshots_to_csv(path, snaps: SnapshotSet) -> None:
    import csv

    cols = snaps.outcomes if snaps.patched else snaps.outcomes[:, None]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"z{j}" for j in range(cols.shape[1])])
        w.writerows(cols.tolist())
    tmp.replace(path)
