import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ancillatomo.hamiltonians import (EvolutionError, FermiHubbardParams, HBHParams, RydbergParams,
                                      SpectralPropagator, annihilation_operator, apply_local_rotation,
                                      bose_hubbard_hamiltonian, doublon_density, evolve, fermi_hubbard_hamiltonian,
                                      ground_state, hbh_hamiltonian, hofstadter_hops, hopping_operator,
                                      krylov_evolve, local_energy_density, number_operator, pauli_operator,
                                      propagator, rydberg_hamiltonian)
from ancillatomo.hilbert import (BasisError, blockaded_basis, boson_basis, fermion_basis, qubit_basis,
                                 random_state)

X = np.array([[0, 1], [1, 0]], dtype=complex)
N1 = np.diag([0.0, 1.0])


def kron_all(ops):
    out = np.array([[1.0 + 0j]])
    for o in ops:
        out = np.kron(out, o)
    return out


def site_op(op, i, n):
    return kron_all([op if k == i else np.eye(2) for k in range(n)])


def rydberg_oracle(n, omega, delta, v2):
    """Full 2^n Hamiltonian with a hard-core blockade projector, then restricted."""
    h = sum(omega / 2 * site_op(X, i, n) - delta * site_op(N1, i, n) for i in range(n))
    h = h + sum(v2 * site_op(N1, i, n) @ site_op(N1, i + 2, n) for i in range(n - 2))
    keep = [x for x in range(2 ** n) if not any((x >> (n - 1 - i)) & 1 and (x >> (n - 2 - i)) & 1
                                                for i in range(n - 1))]
    return h[np.ix_(keep, keep)]


@pytest.mark.parametrize("n,delta,v2", [(3, 0.0, 0.0), (5, -1.0, 0.0), (6, 0.7, 0.2)])
def test_rydberg_matches_projected_kron_oracle(n, delta, v2):
    b = blockaded_basis(n)
    h = rydberg_hamiltonian(b, RydbergParams(1.3, delta, v2)).toarray()
    assert np.allclose(h, rydberg_oracle(n, 1.3, delta, v2))


def test_local_energy_densities_sum_to_hamiltonian_without_nnn():
    b = blockaded_basis(5)
    p = RydbergParams(1.0, -0.4)
    total = sum(local_energy_density(b, i, p) for i in range(5))
    assert np.allclose(total.toarray(), rydberg_hamiltonian(b, p).toarray())


def test_pauli_algebra_on_free_qubits():
    b = qubit_basis(2)
    x, y, z = (pauli_operator(b, 0, a).toarray() for a in "xyz")
    assert np.allclose(x @ y, 1j * z)
    assert np.allclose(z, site_op(np.diag([-1, 1]), 0, 2))
    with pytest.raises(ValueError):
        pauli_operator(b, 0, "w")


def jw_annihilators(n_modes):
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    zz = np.diag([1.0, -1.0])
    return [kron_all([zz] * k + [a] + [np.eye(2)] * (n_modes - k - 1)) for k in range(n_modes)]


def test_fermion_hopping_matches_jordan_wigner_oracle():
    b = fermion_basis(2)   # 4 modes, full Fock space
    cs = jw_annihilators(4)
    # kron index of a config is its bit string read as a binary number
    perm = [int("".join(str(v) for v in c), 2) for c in b.configs]
    for i in range(4):
        for j in range(4):
            oracle = (cs[i].conj().T @ cs[j])[np.ix_(perm, perm)]
            assert np.allclose(hopping_operator(b, i, j).toarray(), oracle), (i, j)
    assert np.allclose(annihilation_operator(b, b, 2).toarray(), cs[2][np.ix_(perm, perm)])


def test_fermion_canonical_anticommutation():
    b = fermion_basis(2)
    c = [annihilation_operator(b, b, m).toarray() for m in range(4)]
    for i in range(4):
        for j in range(4):
            acomm = c[i] @ c[j].conj().T + c[j].conj().T @ c[i]
            assert np.allclose(acomm, np.eye(b.dim) * (i == j))


def test_hubbard_dimer_ground_energy():
    b = fermion_basis(2, 1, 1)
    u, j = 4.0, 1.0
    h = fermi_hubbard_hamiltonian(b, FermiHubbardParams(j, u, ((0, 1),)))
    e0 = ground_state(h).energy
    # closed form of the half-filled two-site Hubbard model
    assert np.isclose(e0, 0.5 * (u - np.sqrt(u * u + 16 * j * j)))


def test_boson_hopping_amplitudes():
    b = boson_basis(2, 2)
    hop = hopping_operator(b, 0, 1).toarray()
    # a0^dag a1 |0,2> = sqrt(2) |1,1>
    assert np.isclose(hop[b.index([1, 1]), b.index([0, 2])], np.sqrt(2))
    n0 = number_operator(b, 0).toarray()
    assert np.allclose(np.diag(n0), b.configs[:, 0])


def test_bose_hubbard_two_site_spectrum():
    b = boson_basis(2, 2)
    u, j = 3.0, 1.0
    h = bose_hubbard_hamiltonian(b, [(1, 0, -j)], u).toarray()
    # analytic: eigenvalues of [[U, -sqrt2 J, 0], [-sqrt2 J, 0, -sqrt2 J], [0, -sqrt2 J, U]]
    m = np.array([[u, -np.sqrt(2) * j, 0], [-np.sqrt(2) * j, 0, -np.sqrt(2) * j], [0, -np.sqrt(2) * j, u]])
    assert np.allclose(np.linalg.eigvalsh(h), np.linalg.eigvalsh(m))


def test_hofstadter_plaquette_flux():
    p = HBHParams(3, 3, 1.0, 0.0, 0.25)
    amp = {(t, f): a for t, f, a in hofstadter_hops(p)}
    for t, f in list(amp):
        amp[(f, t)] = np.conj(amp[(t, f)])
    # counterclockwise loop around the plaquette with corner (0, 0)
    s00, s10, s11, s01 = 0, 3, 4, 1
    loop = amp[(s10, s00)] * amp[(s11, s10)] * amp[(s01, s11)] * amp[(s00, s01)]
    assert np.isclose(np.angle(loop), 2 * np.pi * 0.25)
    h = hbh_hamiltonian(boson_basis(9, 1), p)
    assert np.allclose(h.toarray(), h.toarray().conj().T)


def test_doublon_density():
    b = boson_basis(2, 2)
    v = np.zeros(3, complex)
    v[b.index([2, 0])] = 1
    assert doublon_density(v, b) == 1.0
    v[:] = 0
    v[b.index([1, 1])] = 1
    assert doublon_density(v, b) == 0.0


def test_local_rotation_pi_excites_isolated_atom():
    b = blockaded_basis(3)
    g = np.zeros(b.dim, complex)
    g[b.index([0, 0, 0])] = 1
    out = apply_local_rotation(g, b, 1, np.pi)
    assert np.isclose(abs(out[b.index([0, 1, 0])]), 1)
    # the rotation is unitary on the blockaded space
    rng = np.random.default_rng(0)
    psi = random_state(b.dim, rng)
    assert np.isclose(np.linalg.norm(apply_local_rotation(psi, b, 0, 0.7)), 1)


def test_krylov_regression_on_block_diagonal_hamiltonian():
    # a 3x3 zero-diagonal block next to a large random block; the start vector lives in the small one
    rng = np.random.default_rng(5)
    small = np.array([[0, 1, 0.3], [1, 0, 2], [0.3, 2, 0]], dtype=complex)
    g = rng.normal(size=(200, 200))
    big = (g + g.T) / 2
    h = sla.block_diag(small, big)
    e0 = np.zeros(203, complex)
    e0[0] = 1
    ref = sla.expm(-10j * h) @ e0
    out = krylov_evolve(sp.csr_matrix(h), e0, 10.0)
    assert np.max(np.abs(out - ref)) < 1e-13


def test_krylov_matches_expm_on_random_sparse():
    rng = np.random.default_rng(1)
    a = sp.random(300, 300, density=0.02, random_state=2)
    h = (a + a.T) * 0.5
    v = random_state(300, rng)
    ref = sla.expm(-3j * h.toarray()) @ v
    assert np.allclose(krylov_evolve(h, v, 3.0), ref, atol=1e-10)
    assert np.allclose(krylov_evolve(h, krylov_evolve(h, v, 3.0), -3.0), v, atol=1e-10)


def test_evolve_kinds_agree():
    rng = np.random.default_rng(2)
    b = blockaded_basis(10)   # 144 states, dense path
    h = rydberg_hamiltonian(b, RydbergParams(1.0, 0.5))
    u = propagator(h, 1.7)
    psi = random_state(b.dim, rng)
    rho = np.outer(psi, psi.conj())
    assert np.allclose(evolve(h, psi, 1.7), u @ psi)
    assert np.allclose(evolve(h, rho, 1.7), u @ rho @ u.conj().T)
    assert np.allclose(SpectralPropagator(h).apply(psi, 1.7), u @ psi)


def test_evolve_density_on_krylov_path():
    b = blockaded_basis(14)   # 987 states
    h = rydberg_hamiltonian(b, RydbergParams(1.0, 0.0))
    rng = np.random.default_rng(3)
    psi = random_state(b.dim, rng)
    cols = np.column_stack([psi, rng.normal(size=b.dim)])
    u = propagator(h, 0.9)
    assert np.allclose(evolve(h, cols, 0.9, kind="columns"), u @ cols, atol=1e-9)


def test_ground_state_dense_and_sparse_agree():
    b = blockaded_basis(13)   # 610 states, above the dense limit
    h = rydberg_hamiltonian(b, RydbergParams(1.0, -1.0))
    gs = ground_state(h)
    w = np.linalg.eigvalsh(h.toarray())
    assert np.isclose(gs.energy, w[0])
    assert np.isclose(gs.gap, w[1] - w[0])
    assert not gs.degenerate


def test_model_builders_reject_wrong_basis():
    with pytest.raises(BasisError):
        rydberg_hamiltonian(boson_basis(2, 1), RydbergParams())
    with pytest.raises(BasisError):
        fermi_hubbard_hamiltonian(qubit_basis(2), FermiHubbardParams())
    with pytest.raises(BasisError):
        hbh_hamiltonian(boson_basis(3, 1), HBHParams(2, 2))
    with pytest.raises(ValueError):
        HBHParams(2, 2, alpha=1.5)
    assert issubclass(EvolutionError, RuntimeError)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), t=st.floats(-5, 5))
def test_evolution_preserves_norm(seed, t):
    rng = np.random.default_rng(seed)
    b = blockaded_basis(7)
    h = rydberg_hamiltonian(b, RydbergParams(1.0, rng.normal(), 0.3))
    psi = random_state(b.dim, rng)
    assert np.isclose(np.linalg.norm(evolve(h, psi, t)), 1.0)


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_local_rotation_matches_exponential_of_pauli(axis):
    b = qubit_basis(3)
    rng = np.random.default_rng(4)
    psi = random_state(b.dim, rng)
    gen = pauli_operator(b, 1, axis).toarray()
    ref = sla.expm(-0.5j * 0.83 * gen) @ psi
    assert np.allclose(apply_local_rotation(psi, b, 1, 0.83, axis), ref)
