import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ancillatomo.hamiltonians import HBHParams, ground_state, hbh_hamiltonian, lattice_site
from ancillatomo.hilbert import (blockaded_basis, boson_basis, partial_trace, qubit_basis, random_density_matrix,
                                 random_state, validate_density_matrix)
from ancillatomo.physics import (BCSParams, MBCNRegions, bcs_pair_correlator, bcs_reduced_density_matrix,
                                 bond_current_operator, bond_currents_exact, continuity_residuals,
                                 correlator_support, dwave_witness, explicit_bcs_state, is_edge_bond,
                                 lattice_bonds, mbcn_expectation, mbcn_operator, mean_filling, neighbors,
                                 pairing_correlator_operator, plaquette_layouts, purity, region_swap_permutation,
                                 renyi2_exact, swap_operator, winding_number)

TINY = [BCSParams(3, 2, 0.3, 1.2, "s-wave"), BCSParams(3, 2, -0.4, 0.8, "d-wave")]


@pytest.mark.parametrize("params", TINY)
def test_wick_correlator_matches_explicit_state(params):
    psi, basis = explicit_bcs_state(params)
    sites = [(x, y) for x in range(params.lx) for y in range(params.ly)]
    idx = {s: i for i, s in enumerate(sites)}
    for i, j, k, l in [((1, 0), (1, 1), (1, 0), (1, 1)), ((0, 0), (1, 0), (1, 1), (2, 1)),
                       ((2, 1), (1, 0), (0, 0), (0, 1))]:
        op = pairing_correlator_operator(idx[i], idx[j], idx[k], idx[l], basis)
        explicit = np.vdot(psi, op @ psi)
        assert np.isclose(explicit.imag, 0, atol=1e-12)
        assert np.isclose(bcs_pair_correlator(params, i, j, k, l), explicit.real, atol=1e-12)


@pytest.mark.parametrize("params", TINY)
def test_filling_and_reduced_state_match_explicit_state(params):
    psi, basis = explicit_bcs_state(params)
    n_total = np.abs(psi) ** 2 @ basis.particle_numbers()
    assert np.isclose(mean_filling(params), n_total / (params.lx * params.ly))
    support = [(1, 0), (1, 1)]
    rho, red = bcs_reduced_density_matrix(params, support)
    validate_density_matrix(rho, tol=1e-9)
    sites = [(x, y) for x in range(params.lx) for y in range(params.ly)]
    direct, red2 = partial_trace(psi, basis, [sites.index(s) for s in support])
    assert red.dim == red2.dim == 16
    assert np.allclose(rho, direct, atol=1e-10)


def test_bcs_params_validation():
    with pytest.raises(ValueError):
        BCSParams(3, 3, 0.0, -1.0)
    with pytest.raises(ValueError):
        BCSParams(3, 3, 0.0, 1.0, "p-wave")
    with pytest.raises(ValueError):
        bcs_reduced_density_matrix(BCSParams(5, 5, 0.0, 1.0), [(0, i) for i in range(5)] + [(1, 0)])


def test_dwave_witness_filters_neighbours():
    c = {j: 1.0 for j in neighbors((2, 2))}
    assert dwave_witness(c, (2, 2)) == 0.0
    c[(3, 2)] = 2.0
    assert dwave_witness(c) == 1.0
    with pytest.raises(KeyError):
        dwave_witness({(3, 2): 1.0}, (2, 2))
    assert correlator_support((2, 2), (2, 3)) == [(2, 2), (2, 3)]
    assert correlator_support((2, 2), (1, 2)) == [(1, 2), (2, 2), (2, 3)]


def test_pairing_symmetry_shows_in_the_witness():
    s = BCSParams(11, 11, 0.5, 5.0, "s-wave")
    d = BCSParams(11, 11, 0.5, 5.0, "d-wave")
    up = (5, 6)
    ws = dwave_witness({j: bcs_pair_correlator(s, (5, 5), j, up, (5, 5)) for j in neighbors((5, 5))}, (5, 5))
    wd = dwave_witness({j: bcs_pair_correlator(d, (5, 5), j, up, (5, 5)) for j in neighbors((5, 5))}, (5, 5))
    assert abs(ws) < 1e-12
    assert wd > 0.1


def small_hbh():
    p = HBHParams(3, 3, 1.0, 4.0, 0.25)
    b = boson_basis(9, 2)
    return p, b, ground_state(hbh_hamiltonian(b, p)).vector


def test_region_swap_is_an_involution():
    b = boson_basis(6, 2)
    perm = region_swap_permutation(b, [0, 1], [4, 5])
    assert np.array_equal(perm[perm], np.arange(b.dim))
    with pytest.raises(ValueError):
        region_swap_permutation(b, [0], [4, 5])


def test_mbcn_expectation_matches_dense_operator():
    p = HBHParams(4, 3, 1.0, 5.0, 0.3)
    b = boson_basis(12, 2)
    psi = ground_state(hbh_hamiltonian(b, p)).vector
    reg = MBCNRegions(4, 3, 0, 1, 2, 3, 0)
    phis = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    fast = mbcn_expectation(psi, phis, reg, b)
    for ph, f in zip(phis, fast):
        op, _ = mbcn_operator(ph, reg, b)
        assert np.isclose(np.vdot(psi, op @ psi), f)


def test_winding_number_of_simple_curves():
    phi = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    assert winding_number(np.exp(1j * phi)) == (1, True)
    assert winding_number(np.exp(-2j * phi))[0] == -2
    assert winding_number(2 + np.exp(1j * phi))[0] == 0
    assert winding_number(0.1 * np.exp(1j * phi), eps=0.5) == (1, False)
    with pytest.raises(ValueError):
        winding_number(np.ones(8))


def test_bond_current_operator_is_hermitian_and_antisymmetric():
    p, b, psi = small_hbh()
    op = bond_current_operator((3, 0), p, b).toarray()
    assert np.allclose(op, op.conj().T)
    # a single boson on site 0 with a real hop: current vanishes on real states
    real = boson_basis(9, 1)
    v = np.zeros(real.dim, complex)
    v[real.index([1] + [0] * 8)] = 1
    assert abs(np.vdot(v, bond_current_operator((3, 0), p, real) @ v)) < 1e-14


def test_currents_vanish_without_flux():
    p = HBHParams(3, 3, 1.0, 4.0, 0.0)
    b = boson_basis(9, 2)
    psi = ground_state(hbh_hamiltonian(b, p)).vector
    cur = bond_currents_exact(psi, p, b)
    assert max(abs(v) for v in cur.values()) < 1e-10


def test_continuity_on_an_eigenstate():
    p, b, psi = small_hbh()
    cur = bond_currents_exact(psi, p, b)
    res = continuity_residuals(cur, p)
    assert list(res) == [lattice_site(1, 1, 3)]
    assert max(abs(v) for v in res.values()) < 1e-10
    assert max(abs(v) for v in cur.values()) > 1e-3


def test_edge_bond_classification():
    p = HBHParams(4, 4)
    bonds = lattice_bonds(p)
    assert len(bonds) == 2 * 4 * 3
    edge = [bd for bd in bonds if is_edge_bond(bd, p)]
    assert len(edge) == 12


@pytest.mark.parametrize("lx,ly", [(4, 4), (6, 6), (5, 3)])
def test_plaquette_layouts_cover_every_bond_once(lx, ly):
    layouts = plaquette_layouts(lx, ly)
    for tiles in layouts:
        assert sorted(s for t in tiles for s in t) == list(range(lx * ly))
        assert max(len(t) for t in tiles) <= 4
    for bond in lattice_bonds(HBHParams(lx, ly)):
        hits = sum(set(bond) <= set(t) for tiles in layouts for t in tiles)
        assert hits == 1, bond


def test_swap_operator_gives_purity():
    b = qubit_basis(3)
    rng = np.random.default_rng(0)
    rho = random_density_matrix(8, rng)
    sw = swap_operator([0, 2], b)
    assert np.isclose(np.trace(sw @ np.kron(rho, rho)).real, purity(rho, b, [0, 2]))


def test_swap_operator_on_blockaded_chain():
    b = blockaded_basis(4)
    rng = np.random.default_rng(1)
    psi = random_state(b.dim, rng)
    rho = np.outer(psi, psi.conj())
    sw = swap_operator([0, 1], b)
    assert np.isclose(np.trace(sw @ np.kron(rho, rho)).real, purity(rho, b, [0, 1]))


def test_renyi2_of_bell_pair():
    b = qubit_basis(2)
    psi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert np.isclose(renyi2_exact(psi, b, [0]), math.log(2))
    assert np.isclose(purity(np.outer(psi, psi), b, []), 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), data=st.data())
def test_renyi2_is_symmetric_for_pure_states(seed, data):
    b = qubit_basis(4)
    psi = random_state(16, np.random.default_rng(seed))
    a = data.draw(st.lists(st.integers(0, 3), min_size=1, max_size=3, unique=True))
    rest = [s for s in range(4) if s not in a]
    assert np.isclose(renyi2_exact(psi, b, a), renyi2_exact(psi, b, rest))


def test_neighbors_weights():
    w = neighbors((0, 0))
    assert sorted(w.values()) == [-1, -1, 1, 1]
    assert all(abs(dx) + abs(dy) == 1 for dx, dy in w)
    assert list(itertools.islice(w, 1)) == [(1, 0)]
