import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from ancillatomo.diagnostics import (ChainFamily, chain_setup, fit_slope, lieb_robinson_scan,
                                     noise_variance_scan, null_space_symmetry, otoc_completeness_witness,
                                     random_rank_k_observable, singular_spectrum, systematic_error_bound)
from ancillatomo.hilbert import basis_state, qubit_basis, tensor_extend
from ancillatomo.scrambling import QuenchConfig, born_distribution, build_scrambling_map, depolarized_map


def idle_map():
    ext = tensor_extend(qubit_basis(1), qubit_basis(1))
    cfg = QuenchConfig(ext, basis_state(ext.ancilla, [0]), unitary=np.eye(4))
    return build_scrambling_map(cfg), ext


def random_map(seed=0):
    ext = tensor_extend(qubit_basis(1), qubit_basis(2))
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    return build_scrambling_map(QuenchConfig(ext, basis_state(ext.ancilla, [0, 0]), (g + g.conj().T) / 2, 1.0))


def test_spectrum_of_complete_map_matches_svd():
    smap = random_map()
    rep = singular_spectrum(smap)
    sv = sla.svdvals(smap.matrix())
    assert rep.complete and rep.null_dim == 0
    assert np.isclose(rep.ratio, sv[-1] / sv[0])
    assert np.isclose(rep.condition_number, sv[0] / sv[-1])
    assert rep.to_dict()["complete"] is True


def test_idle_ancilla_sees_only_populations():
    smap, _ = idle_map()
    rep = singular_spectrum(smap)
    assert not rep.complete
    assert rep.null_dim == 2
    assert np.isclose(rep.overlap(np.array([[0, 1], [1, 0]])), 1.0)
    assert np.isclose(rep.overlap(np.diag([1.0, -1.0])), 0.0)
    # with a charge label per basis state the whole null space is off-diagonal
    sym = null_space_symmetry(rep, [0, 1])
    assert np.isclose(sym["fraction"], 1.0) and sym["symmetric_dim"] == 2
    ops = rep.null_operators()
    assert np.allclose([np.trace(o) for o in ops], 0)


def test_otoc_witness_detects_invisible_perturbations():
    smap, ext = idle_map()
    phi = basis_state(ext.ancilla, [0])
    off = np.array([[0, 0.1], [0.1, 0]])
    diag = np.diag([0.1, -0.1])
    assert otoc_completeness_witness(off, ext, phi, np.eye(4)) == 0.0
    w = otoc_completeness_witness(diag, ext, phi, np.eye(4))
    dp = smap.matrix() @ smap.vec(diag)
    assert np.isclose(w, 4 * np.sum(np.abs(dp) ** 2))
    with pytest.raises(ValueError):
        otoc_completeness_witness(np.eye(2), ext, phi, np.eye(4))


def test_systematic_error_bound_formula():
    o = np.array([1.0, -2.0, 2.0, 0.0])
    assert np.isclose(systematic_error_bound(o, 0.1, 2.0), 0.2 * math.sqrt(9 / 4))
    assert np.isclose(systematic_error_bound(o, 0.1, 2.0, d_ext=9), 0.2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), d=st.integers(2, 8), data=st.data())
def test_random_rank_k_projector(seed, d, data):
    k = data.draw(st.integers(1, d))
    p = random_rank_k_observable(d, k, np.random.default_rng(seed))
    assert np.allclose(p, p.conj().T)
    assert np.allclose(p @ p, p)
    assert np.isclose(np.trace(p).real, k)


def test_chain_family_geometry():
    fam = ChainFamily((2, 3, 0))
    assert fam.sites() == ([2, 3, 4], [0, 1])
    assert fam.boundaries == 1
    assert ChainFamily((1, 2, 1, 2, 1)).boundaries == 4
    ext, h, phi, h_sys = chain_setup(ChainFamily((0, 3, 2)))
    assert ext.system.dim == 5 and ext.ancilla.dim == 3
    # the seam edge blocks simultaneous excitation of system site 2 and ancilla site 0
    assert ext.dim == 13
    assert np.allclose(h.toarray(), h.toarray().conj().T)


def test_lieb_robinson_scan_stops_at_threshold():
    fams = {"a": ChainFamily((0, 2, 4))}
    rows, tstar = lieb_robinson_scan(fams, [0.0, 2.0, 4.0, 8.0, 16.0], threshold=1e9, stop_early=True)
    assert tstar["a"] == 2.0 and len(rows) == 2
    rows, tstar = lieb_robinson_scan(fams, [0.0, 0.5], threshold=-1.0)
    assert tstar["a"] == math.inf and len(rows) == 2
    assert math.isinf(rows[0]["var"])   # at t = 0 the map is incomplete


def test_noise_variance_scan_reports_rows_and_slope():
    smap = random_map(1)
    rho = np.diag([0.7, 0.3])
    obs = [np.diag([1.0, 0.0]), np.array([[0, 1], [1, 0]])]
    rows, slope = noise_variance_scan(smap, lambda g: depolarized_map(smap, g), rho, obs, [0.0, 0.5, 1.0])
    assert len(rows) == 6
    assert all(r["ratio"] == 1.0 for r in rows if r["gamma_t"] == 0)
    assert slope > 0


def test_fit_slope():
    assert np.isclose(fit_slope([0, 1, 2], [1, 3, 5]), 2.0)


def test_born_of_idle_map_is_population():
    smap, _ = idle_map()
    p = born_distribution(smap, np.diag([0.25, 0.75]))
    assert np.allclose(p, [0.25, 0, 0.75, 0])
