"""End-to-end drivers: prepare a state, build maps, sample snapshots, estimate.

Every driver returns an ``ExperimentResult`` whose ``rows`` are plain dicts
ready for CSV output.  Estimate rows always carry ``stderr`` and ``m``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import presets
from .diagnostics import ChainFamily, fit_slope, lieb_robinson_scan, random_rank_k_observable
from .hamiltonians import (RydbergParams, apply_local_rotation, evolve,
                           ground_state, hbh_hamiltonian, local_energy_density, rydberg_hamiltonian)
from .hilbert import Basis, boson_basis, partial_trace
from .physics import (BCSParams, bcs_reduced_density_matrix, bond_current_operator,
                      bond_currents_exact, correlator_support, dwave_witness, is_edge_bond, lattice_bonds,
                      mbcn_expectation, mbcn_patch_operator, neighbors, pairing_correlator_operator,
                      plaquette_layouts, polarization_phase, renyi2_exact, winding_number)
from .recovery import RecoveryMap, moore_penrose, optimal_recovery, variance
from .sampling import (EstimateResult, PatchSnapshotData, estimate_renyi2, estimate_values, make_rng,
                       sample_patched, sample_snapshots)
from .scrambling import Patch, PatchedMap, QuenchConfig, ScramblingMap, born_distribution

WINDING_GRID = 32


def get_map(config: QuenchConfig) -> ScramblingMap:
    """Map for ``config``, through the on-disk cache when one is configured."""
    from .io import CACHE_ENV, cached_map

    return cached_map(config, use_cache=bool(os.environ.get(CACHE_ENV)))[0]


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    summary: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    """Additional named tables (lists of row dicts)."""


def _embed_block(rho: np.ndarray, red: Basis, target: Basis) -> np.ndarray:
    """Copy a reduced density matrix into ``target`` ordering, dropping configurations it cannot hold."""
    idx = target.indices(red.configs)
    keep = idx >= 0
    out = np.zeros((target.dim, target.dim), dtype=complex)
    out[np.ix_(idx[keep], idx[keep])] = rho[np.ix_(keep, keep)]
    return out / np.trace(out).real


# ---------------------------------------------------------------------------
# many-body Chern number
# ---------------------------------------------------------------------------

@dataclass
class MBCNSetup:
    preset: presets.MBCNPreset
    basis: Basis
    state: np.ndarray
    pmap: PatchedMap
    recovery: RecoveryMap
    phis: np.ndarray
    tables: np.ndarray
    """Per-phi estimator values on the R1 u R3 patch outcomes, shape (n_phi, d_ext)."""
    v2: np.ndarray
    """V2^s on the R2 readout basis."""
    exact: np.ndarray


def mbcn_setup(preset: presets.MBCNPreset, n_phi: int = WINDING_GRID) -> MBCNSetup:
    basis = presets.hbh_basis(preset)
    state = ground_state(hbh_hamiltonian(basis, preset.params)).vector
    reg = preset.regions
    config = presets.mbcn_quench(preset)
    smap = get_map(config)
    sysb = config.system
    n13 = len(reg.r1) + len(reg.r3)
    rho, red = partial_trace(state, basis, reg.r1 + reg.r3)
    rho13 = _embed_block(rho, red, sysb)
    rec = optimal_recovery(smap, born_distribution(smap, rho13))
    phis = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    r1 = list(range(len(reg.r1)))
    r3 = list(range(len(reg.r1), n13))
    tables = np.array([rec.estimator(mbcn_patch_operator(ph, sysb, r1, r3, reg)) for ph in phis])
    n = preset.n_bosons
    r2b = boson_basis(len(reg.r2), list(range(n + 1)))
    restb = boson_basis(len(reg.rest()), list(range(n + 1)))
    pmap = PatchedMap(basis, [Patch(tuple(reg.r1 + reg.r3), sysb, smap), Patch(tuple(reg.r2), r2b),
                              Patch(tuple(reg.rest()), restb)])
    v2 = polarization_phase(r2b, range(len(reg.r2)), reg, reg.s, lattice_sites=reg.r2)
    exact = mbcn_expectation(state, phis, reg, basis)
    return MBCNSetup(preset, basis, state, pmap, rec, phis, tables, v2, exact)


def mbcn_estimates(setup: MBCNSetup, m: int, seed: int) -> tuple[list[EstimateResult], dict]:
    snaps = sample_patched(setup.pmap, setup.state, m, seed, discard=True)
    z13, z2 = snaps.column(0), snaps.column(1)
    ests = [estimate_values(tab[z13] * setup.v2[z2], "gamma-optimal", f"phi={ph:.6f}")
            for tab, ph in zip(setup.tables, setup.phis)]
    return ests, dict(snaps.meta)


def mbcn_winding(ests: Sequence[EstimateResult]) -> tuple[int, bool]:
    """Winding of estimated curve; points closer to the origin than 3 stderr flag it unreliable."""
    eps = 3 * max(e.stderr for e in ests)
    return winding_number([e.value for e in ests], eps)


def run_mbcn(preset_name: str = "hbh-4x4", m: int = 2000, seed: int = 0, repetitions: int = 0,
             n_phi: int = WINDING_GRID) -> ExperimentResult:
    setup = mbcn_setup(presets.MBCN_PRESETS[preset_name], n_phi)
    w_exact, _ = winding_number(setup.exact)
    ests, meta = mbcn_estimates(setup, m, seed)
    w_est, reliable = mbcn_winding(ests)
    rows = [{"phi": float(ph), "re_T": e.value.real, "im_T": e.value.imag, "stderr_re": e.stderr_re,
             "stderr_im": e.stderr_im, "exact_re": float(x.real), "exact_im": float(x.imag), "m": e.m}
            for ph, e, x in zip(setup.phis, ests, setup.exact)]
    summary = {"preset": preset_name, "winding_exact": w_exact, "winding_estimate": w_est,
               "reliable": reliable, "m": m, "discarded": meta.get("discarded", 0),
               "min_abs_T": float(np.min(np.abs(setup.exact)))}
    if repetitions:
        hits = 0
        for r in range(repetitions):
            e_r, _ = mbcn_estimates(setup, m, seed + 1 + r)
            hits += mbcn_winding(e_r)[0] == w_exact
        summary["success_probability"] = hits / repetitions
        summary["repetitions"] = repetitions
    return ExperimentResult("hbh-mbcn", rows, summary)


# ---------------------------------------------------------------------------
# Rydberg arrays
# ---------------------------------------------------------------------------

def fidelity_grid(n: int = 17) -> np.ndarray:
    return np.linspace(-2.0, 2.0, n)


def run_fidelity(n_sys: int = 8, n_anc: int = 10, deltas: Sequence[float] | None = None, m: int = 2000,
                 seed: int = 0, t: float = presets.TWO_PI, delta_state: float = -1.0,
                 flavor: str = "gamma-optimal") -> ExperimentResult:
    """Fidelity of the prepared ground state to reference ground states across detunings."""
    deltas = fidelity_grid() if deltas is None else np.asarray(deltas, float)
    config = presets.rydberg_ladder(n_sys, n_anc, t=t)
    smap = get_map(config)
    psi = presets.rydberg_ground_state(n_sys, delta_state)
    rho = np.outer(psi, psi.conj())
    p = born_distribution(smap, rho)
    rec_opt = optimal_recovery(smap, p)
    rec_mp = moore_penrose(smap)
    rec = rec_opt if flavor == "gamma-optimal" else rec_mp
    snaps = sample_snapshots(p, m, seed, config_hash=smap.config_hash)
    rows = []
    for d in deltas:
        ref = presets.rydberg_ground_state(n_sys, float(d))
        proj = np.outer(ref, ref.conj())
        o = rec.estimator(proj)
        est = estimate_values(o[snaps.outcomes].real, rec.flavor, f"delta_ref={d:.6f}")
        rows.append({"delta_ref": float(d), "estimate": est.value.real, "stderr": est.stderr,
                     "exact": float(abs(np.vdot(ref, psi)) ** 2), "m": m,
                     "var_opt": variance(rec_opt.estimator(proj), p),
                     "var_mp": variance(rec_mp.estimator(proj), p)})
    self_proj = rho
    v_opt, v_mp = variance(rec_opt.estimator(self_proj), p), variance(rec_mp.estimator(self_proj), p)
    inside = [abs(r["estimate"] - r["exact"]) <= 3 * r["stderr"] for r in rows]
    summary = {"n_sys": n_sys, "n_anc": n_anc, "d_sys": smap.d_sys, "d_ext": smap.d_ext, "t": t, "m": m,
               "flavor": rec.flavor, "var_opt": v_opt, "var_mp": v_mp, "var_ratio": v_opt / v_mp,
               "fraction_within_3sigma": float(np.mean(inside)),
               "sigma_ratio": rec_opt.sigma_min / rec_opt.sigma_max}
    return ExperimentResult("rydberg-fidelity", rows, summary)


def perturbed_chain_state(n_sys: int, tau: float, site: int | None = None, angle: float = math.pi,
                          params: RydbergParams = presets.RYDBERG_DEFAULT) -> tuple[np.ndarray, Basis]:
    """Ground state, rotated about y on one site, then evolved for ``tau``."""
    basis = presets.rydberg_chain(n_sys)
    h = rydberg_hamiltonian(basis, params)
    site = n_sys // 2 - 1 if site is None else site
    psi = apply_local_rotation(ground_state(h).vector, basis, site, angle, "y")
    return (evolve(h, psi, tau) if tau else psi), basis


def _patch_references(pmap: PatchedMap, state: np.ndarray) -> list[np.ndarray]:
    """Exact outcome distribution of every patch, used as the recovery reference."""
    out = []
    for patch in pmap.patches:
        rho, red = partial_trace(state, pmap.system, patch.sites)
        rho = _embed_block(rho, red, patch.basis)
        out.append(born_distribution(patch.smap, rho))
    return out


def run_energy(n_sys: int = 12, taus: Sequence[float] = (0.0, 2 * presets.TWO_PI, 4 * presets.TWO_PI),
               m: int = 2000, seed: int = 0, n_anc: int = 3, t: float = 4 * presets.TWO_PI,
               angle: float = math.pi) -> ExperimentResult:
    """Local energy densities after a local kick, read out with single-atom patches."""
    params = presets.RYDBERG_DEFAULT
    config = presets.rydberg_single_atom_patch(n_anc, t, params)
    smap = get_map(config)
    atom = config.system
    e_local = local_energy_density(atom, 0, params).toarray()
    rows = []
    for k, tau in enumerate(taus):
        psi, basis = perturbed_chain_state(n_sys, tau, angle=angle)
        pmap = PatchedMap(basis, [Patch((i,), atom, smap) for i in range(n_sys)])
        refs = _patch_references(pmap, psi)
        snaps = sample_patched(pmap, psi, m, seed + k, config_hash=smap.config_hash)
        for i in range(n_sys):
            o = optimal_recovery(smap, refs[i]).estimator(e_local).real
            est = estimate_values(o[snaps.column(i)], "gamma-optimal", f"E_{i}")
            exact = float(np.real(np.vdot(psi, local_energy_density(basis, i, params) @ psi)))
            rows.append({"tau": float(tau), "site": i, "estimate": est.value.real, "stderr": est.stderr,
                         "exact": exact, "m": m})
    inside = [abs(r["estimate"] - r["exact"]) <= 3 * r["stderr"] for r in rows]
    summary = {"n_sys": n_sys, "n_anc": n_anc, "t": t, "m": m, "d_ext_patch": smap.d_ext,
               "fraction_within_3sigma": float(np.mean(inside))}
    return ExperimentResult("rydberg-energy", rows, summary)


def run_entropy(n_sys: int = 12, patch_size: int = 6, n_anc: int = 8, t: float = presets.TWO_PI,
                taus: Sequence[float] = (2 * presets.TWO_PI,), m: int = 100_000, seed: int = 0,
                angle: float = math.pi) -> ExperimentResult:
    """Second Renyi entropy of left blocks [0, l) from patched snapshots.

    Each row reports the estimator with the smaller error (A or its
    complement) and, separately, the error of the A-side estimator alone.
    """
    if n_sys % patch_size:
        raise ValueError("patches must tile the chain")
    config = presets.rydberg_ladder(patch_size, n_anc, t=t)
    smap = get_map(config)
    pbasis = config.system
    n_patch = n_sys // patch_size
    rows = []
    for k, tau in enumerate(taus):
        psi, basis = perturbed_chain_state(n_sys, tau, angle=angle)
        sites = [tuple(range(j * patch_size, (j + 1) * patch_size)) for j in range(n_patch)]
        pmap = PatchedMap(basis, [Patch(s, pbasis, smap) for s in sites])
        refs = _patch_references(pmap, psi)
        data = [PatchSnapshotData(optimal_recovery(smap, r), pbasis, s) for r, s in zip(refs, sites)]
        snaps = sample_patched(pmap, psi, m, seed + k, config_hash=smap.config_hash)
        for l in range(1, n_sys):
            sub = list(range(l))
            best = estimate_renyi2(data, snaps, sub, n_sys)
            a_only = estimate_renyi2(data, snaps, sub, n_sys, both_sides=False)
            rows.append({"tau": float(tau), "l": l, "estimate": best.value.real, "stderr": best.stderr,
                         "exact": renyi2_exact(psi, basis, sub), "stderr_a_side": a_only.stderr,
                         "patches_spanned": len({s // patch_size for s in sub}), "side": best.label,
                         "flagged": best.flagged, "m": m})
    inside = [abs(r["estimate"] - r["exact"]) <= 3 * r["stderr"] for r in rows]
    one = [r["stderr_a_side"] for r in rows if r["patches_spanned"] == 1]
    two = [r["stderr_a_side"] for r in rows if r["patches_spanned"] > 1]
    summary = {"n_sys": n_sys, "patch_size": patch_size, "n_anc": n_anc, "t": t, "m": m,
               "d_ext_patch": smap.d_ext, "fraction_within_3sigma": float(np.mean(inside)),
               "mean_stderr_one_patch": float(np.nanmean(one)), "mean_stderr_two_patches": float(np.nanmean(two)),
               # a non-positive purity estimate leaves S2 undefined; those rows are counted, not averaged
               "undefined_one_patch": int(np.isnan(one).sum()), "undefined_two_patches": int(np.isnan(two).sum())}
    return ExperimentResult("rydberg-entropy", rows, summary)


# ---------------------------------------------------------------------------
# pairing symmetry
# ---------------------------------------------------------------------------

@dataclass
class CorrelatorSetup:
    pairing: str
    neighbor: tuple
    chi: int
    p: np.ndarray
    o: np.ndarray
    exact: float


def bcs_setup(lx: int = 11, mu: float = 0.5, delta: float = 5.0,
              bridge: presets.FermionBridge = presets.BCS_BRIDGE) -> list[CorrelatorSetup]:
    """Estimator tables for C(0, j, 1_y, 0) over the four neighbours, both pairings.

    The real part of the Hermitian part is estimated, which is all the
    witness uses.
    """
    maps: dict[int, ScramblingMap] = {}
    out = []
    for pairing in ("s-wave", "d-wave"):
        params = BCSParams(lx, lx, mu, delta, pairing)
        c = params.center
        up = (c[0], c[1] + 1)
        for j, chi in neighbors(c).items():
            sup = correlator_support(c, j)
            rho, basis = bcs_reduced_density_matrix(params, sup)
            idx = {s: i for i, s in enumerate(sup)}
            op = pairing_correlator_operator(idx[c], idx[j], idx[up], idx[c], basis).toarray()
            herm = (op + op.conj().T) / 2
            n = len(sup)
            if n not in maps:
                maps[n] = get_map(presets.fermion_bridged(n, bridge))
            smap = maps[n]
            p = born_distribution(smap, rho)
            o = optimal_recovery(smap, p).estimator(herm).real
            out.append(CorrelatorSetup(pairing, j, chi, p, o, float(np.real(np.trace(herm @ rho)))))
    return out


def _witness_from_samples(setups: Sequence[CorrelatorSetup], pairing: str, m: int, seed: int,
                          stream0: int) -> tuple[float, float, list]:
    total, var, ests = 0.0, 0.0, []
    for k, cs in enumerate(s for s in setups if s.pairing == pairing):
        snaps = sample_snapshots(cs.p, m, seed, stream=stream0 + k)
        est = estimate_values(cs.o[snaps.outcomes], "gamma-optimal", f"C_{cs.neighbor}")
        ests.append(est)
        total += cs.chi * est.value.real
        var += est.stderr ** 2
    return total, math.sqrt(var), ests


def run_bcs(lx: int = 11, mu: float = 0.5, delta: float = 5.0, m: int = 2000, seed: int = 0,
            repetitions: int = 200, threshold: float = 0.068) -> ExperimentResult:
    setups = bcs_setup(lx, mu, delta)
    rows, summary = [], {"lx": lx, "mu": mu, "delta": delta, "m_per_correlator": m, "threshold": threshold}
    for pairing in ("s-wave", "d-wave"):
        w, se, ests = _witness_from_samples(setups, pairing, m, seed, 0)
        mine = [s for s in setups if s.pairing == pairing]
        for cs, est in zip(mine, ests):
            rows.append({"pairing": pairing, "jx": cs.neighbor[0], "jy": cs.neighbor[1], "chi": cs.chi,
                         "estimate": est.value.real, "stderr": est.stderr, "exact": cs.exact, "m": m})
        key = pairing.split("-")[0]
        summary[f"witness_exact_{key}"] = dwave_witness({s.neighbor: s.exact for s in mine})
        summary[f"witness_estimate_{key}"] = w
        summary[f"witness_stderr_{key}"] = se
    if repetitions:
        hits = {"s-wave": 0, "d-wave": 0}
        joint = 0
        for r in range(repetitions):
            ws = _witness_from_samples(setups, "s-wave", m, seed, 1000 + 8 * r)[0]
            wd = _witness_from_samples(setups, "d-wave", m, seed, 1004 + 8 * r)[0]
            hits["s-wave"] += ws < threshold
            hits["d-wave"] += wd > threshold
            joint += (ws < threshold) and (wd > threshold)
        summary.update(success_s=hits["s-wave"] / repetitions, success_d=hits["d-wave"] / repetitions,
                       success_joint=joint / repetitions, repetitions=repetitions)
    return ExperimentResult("bcs-dwave", rows, summary)


# ---------------------------------------------------------------------------
# bond currents
# ---------------------------------------------------------------------------

def run_currents(preset_name: str = "hbh-6x6", m: int = 5000, seed: int = 0, t: float = 10.0,
                 anc_bosons: int = 2) -> ExperimentResult:
    """Bond currents from two shifted tilings of plaquette patches."""
    preset = presets.MBCN_PRESETS[preset_name]
    params = preset.params
    basis = presets.hbh_basis(preset)
    psi = ground_state(hbh_hamiltonian(basis, params)).vector
    exact = bond_currents_exact(psi, params, basis)
    rows = []
    cache: dict = {}
    for k, layout in enumerate(plaquette_layouts(params.lx, params.ly)):
        patches = []
        for block in layout:
            cfg = presets.plaquette_quench(block, params, preset.n_bosons, anc_bosons, t)
            key = cfg.digest()
            if key not in cache:
                cache[key] = get_map(cfg)
            patches.append(Patch(tuple(block), cfg.system, cache[key]))
        pmap = PatchedMap(basis, patches)
        refs = _patch_references(pmap, psi)
        snaps = sample_patched(pmap, psi, m, seed + k)
        for j, (patch, ref) in enumerate(zip(patches, refs)):
            block = set(patch.sites)
            inner = [b for b in lattice_bonds(params) if b[0] in block and b[1] in block]
            if not inner:
                continue
            rec = optimal_recovery(patch.smap, ref)
            site_map = {s: i for i, s in enumerate(patch.sites)}
            for bond in inner:
                op = bond_current_operator(bond, params, patch.basis, site_map).toarray()
                o = rec.estimator(op).real
                est = estimate_values(o[snaps.column(j)], "gamma-optimal", f"j{bond}")
                (x2, y2), (x1, y1) = divmod(bond[0], params.ly), divmod(bond[1], params.ly)
                rows.append({"layout": k, "x_from": x1, "y_from": y1, "x_to": x2, "y_to": y2,
                             "edge": is_edge_bond(bond, params), "estimate": est.value.real,
                             "stderr": est.stderr, "exact": exact[bond], "m": m})
    edge = [abs(r["estimate"]) for r in rows if r["edge"]]
    bulk = [abs(r["estimate"]) for r in rows if not r["edge"]]
    edge_x = [abs(r["exact"]) for r in rows if r["edge"]]
    bulk_x = [abs(r["exact"]) for r in rows if not r["edge"]]
    summary = {"preset": preset_name, "m": m, "bonds": len(rows),
               "mean_edge": float(np.mean(edge)), "mean_bulk": float(np.mean(bulk)),
               "mean_edge_exact": float(np.mean(edge_x)), "mean_bulk_exact": float(np.mean(bulk_x)),
               "edge_to_bulk": float(np.mean(edge) / np.mean(bulk)),
               "fraction_within_3sigma": float(np.mean([abs(r["estimate"] - r["exact"]) <= 3 * r["stderr"]
                                                        for r in rows]))}
    return ExperimentResult("hbh-currents", rows, summary)


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

def lr_families(sizes: Sequence[int] = (3, 4, 5, 6), length: int = 17) -> dict:
    fams = {(n, 1): ChainFamily((0, n, length - n)) for n in sizes}
    fams[(5, 4)] = ChainFamily((4, 3, 4, 2, 4))
    return fams


def run_lr_scan(times: Sequence[float] | None = None, sizes: Sequence[int] = (3, 4, 5, 6),
                threshold: float = 1.5) -> ExperimentResult:
    times = np.arange(0.5, 80.01, 0.5) if times is None else np.asarray(times, float)
    rows, tstar = lieb_robinson_scan(lr_families(sizes), times, threshold=threshold, stop_early=True)
    out = [{"n_sys": k[0], "boundaries": k[1], "t": r["t"], "var": r["var"]} for r in rows for k in [r["key"]]]
    single = sorted((k[0], v) for k, v in tstar.items() if k[1] == 1)
    finite = [(n, v) for n, v in single if math.isfinite(v)]
    slope = float(np.polyfit(*zip(*finite), 1)[0]) if len(finite) > 1 else float("nan")
    summary = {"threshold": threshold, "tstar": {f"{k[0]}x{k[1]}": v for k, v in tstar.items()},
               "slope": slope,
               "monotone": all(b[1] > a[1] for a, b in zip(single, single[1:]))}
    return ExperimentResult("lr-scan", out, summary)


def run_noise_scan(preset: str = "rydberg-6+8", gamma_ts: Sequence[float] = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0),
                   n_observables: int = 5, seed: int = 0) -> ExperimentResult:
    """Cost of the closed-form depolarizing estimators as the noise grows.

    ``ratio`` is the exact variance under the noisy outcome distribution
    relative to the noiseless one.  ``scale_ratio`` compares the estimator
    magnitudes sum_z |o_z|^2, which grow as e^{2 gamma t} up to a correction
    of order mean(o)^2 / mean(o^2).  The two differ because the uniform part of
    the noisy distribution weights every outcome equally.
    """
    from .recovery import depolarizing_estimator
    from .scrambling import depolarized_map

    smap = get_map(presets.rydberg_preset(preset))
    psi = presets.rydberg_preset_state(preset)
    rho = np.outer(psi, psi.conj())
    rng = make_rng(seed, 7)
    obs = [rho] + [random_rank_k_observable(smap.d_sys, int(k), rng)
                   for k in rng.integers(1, smap.d_sys + 1, n_observables - 1)]
    base = moore_penrose(smap)
    p0 = born_distribution(smap, rho)
    rows = []
    for g in gamma_ts:
        pg = born_distribution(depolarized_map(smap, g), rho) if g else p0
        for i, o in enumerate(obs):
            o0 = base.estimator(o)
            og = depolarizing_estimator(o0, g)
            v0, vg = variance(o0, p0), variance(og, pg)
            rows.append({"gamma_t": float(g), "observable": i, "var": vg, "ratio": vg / v0,
                         "scale_ratio": float(np.sum(np.abs(og) ** 2) / np.sum(np.abs(o0) ** 2)),
                         "predicted": math.exp(2 * g), "mean": float(np.real(pg @ og)),
                         "exact": float(np.real(np.trace(o @ rho)))})
    dev = lambda key: max(abs(r[key] / r["predicted"] - 1) for r in rows)
    lg = np.array([r["gamma_t"] for r in rows])
    slope = fit_slope(lg, np.log([r["ratio"] for r in rows]))
    return ExperimentResult("noise-scan", rows, {"preset": preset, "d_ext": smap.d_ext,
                                                 "max_scale_deviation": dev("scale_ratio"),
                                                 "max_variance_deviation": dev("ratio"),
                                                 "log_variance_slope": slope})


def run_systematic_bound(preset: str = "rydberg-6+7", gamma_t: float = 0.02, n_observables: int = 100,
                         seed: int = 0, steps: int | None = None) -> ExperimentResult:
    """Noiseless estimators on data from a locally dephased quench, against the bound."""
    import dataclasses

    from .diagnostics import systematic_error_bound
    from .scrambling import NoiseChannel, noisy_born_distribution

    config = presets.rydberg_preset(preset)
    smap = get_map(config)
    psi = presets.rydberg_preset_state(preset)
    rho = np.outer(psi, psi.conj())
    gamma = gamma_t / config.time
    noise = NoiseChannel("local-dephasing", gamma, steps=steps)
    p_noisy = noisy_born_distribution(dataclasses.replace(config, noise=noise), rho)
    p_clean = born_distribution(smap, rho)
    rec = moore_penrose(smap)
    rng = make_rng(seed, 11)
    rows = []
    for i in range(n_observables):
        k = int(rng.integers(1, smap.d_sys + 1))
        obs = random_rank_k_observable(smap.d_sys, k, rng)
        o = rec.estimator(obs)
        exact = float(np.real(np.trace(obs @ rho)))
        err = abs(float(np.real(p_noisy @ o)) - exact)
        bound = systematic_error_bound(o, gamma, config.time, smap.d_ext)
        rows.append({"observable": i, "rank": k, "error": err, "bound": bound, "within": err <= bound,
                     "clean_error": abs(float(np.real(p_clean @ o)) - exact)})
    return ExperimentResult("systematic-bound", rows,
                            {"preset": preset, "gamma_t": gamma_t, "d_ext": smap.d_ext,
                             "fraction_within": float(np.mean([r["within"] for r in rows]))})


# ---------------------------------------------------------------------------
# sanity path
# ---------------------------------------------------------------------------

def run_custom(n_sys: int = 4, m: int = 1000, seed: int = 0, delta: float = -1.0) -> ExperimentResult:
    """Identity quench with one idle ancilla, read against the diagonal Rydberg density.

    Only diagonal operator components are resolved, which is all a diagonal
    observable needs; the estimate must equal the plain average of the
    observable's diagonal over the sampled configurations.
    """
    from .hilbert import basis_state, blockaded_basis, tensor_extend

    sysb = presets.rydberg_chain(n_sys)
    ancb = blockaded_basis(1, [])
    ext = tensor_extend(sysb, ancb)
    config = QuenchConfig(ext, basis_state(ancb, [0]), unitary=np.eye(ext.dim), charges=np.arange(sysb.dim),
                          setup="global", label="identity")
    smap = get_map(config)
    psi = presets.rydberg_ground_state(n_sys, delta)
    rho = np.outer(psi, psi.conj())
    p = born_distribution(smap, rho)
    diag = sysb.configs.sum(axis=1).astype(float) / n_sys
    o = moore_penrose(smap).estimator(np.diag(diag)).real
    snaps = sample_snapshots(p, m, seed, config_hash=smap.config_hash)
    est = estimate_values(o[snaps.outcomes], "moore-penrose", "density")
    sys_idx = sysb.indices(ext.configs[snaps.outcomes][:, :n_sys])
    direct = float(np.mean(diag[sys_idx]))
    rows = [{"observable": "density", "estimate": est.value.real, "stderr": est.stderr,
             "exact": float(diag @ np.abs(psi) ** 2), "direct": direct, "m": m}]
    return ExperimentResult("custom", rows, {"n_sys": n_sys, "m": m, "direct_average": direct})


DRIVERS = {
    "rydberg-fidelity": run_fidelity, "rydberg-energy": run_energy, "rydberg-entropy": run_entropy,
    "bcs-dwave": run_bcs, "hbh-mbcn": run_mbcn, "hbh-currents": run_currents, "lr-scan": run_lr_scan,
    "noise-scan": run_noise_scan, "systematic-bound": run_systematic_bound, "custom": run_custom,
}
