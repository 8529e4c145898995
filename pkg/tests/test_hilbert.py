import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ancillatomo.hilbert import (BasisError, basis_state, blockaded_basis, boson_basis, build_basis,
                                 devectorize, embed_vector, fermion_basis, partial_trace, qubit_basis,
                                 random_density_matrix, random_state, tensor_extend,
                                 validate_density_matrix, vectorize)


def fib(n):
    a, b = 1, 2
    for _ in range(n - 1):
        a, b = b, a + b
    return b if n > 0 else 1


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 12])
def test_blockaded_chain_dimension_is_fibonacci(n):
    # independent count: bit strings without adjacent ones
    brute = sum(1 for x in range(2 ** n) if x & (x >> 1) == 0)
    assert blockaded_basis(n).dim == brute
    assert brute == fib(n)


@pytest.mark.parametrize("sites,particles", [(3, 2), (4, 3), (6, 2), (5, 5)])
def test_boson_dimension_matches_stars_and_bars(sites, particles):
    assert boson_basis(sites, particles).dim == math.comb(sites + particles - 1, particles)


def test_boson_max_occupation_cap():
    b = boson_basis(4, 4, max_occ=1)
    assert b.dim == 1
    assert boson_basis(4, [0, 1, 2]).dim == 1 + 4 + 10


@pytest.mark.parametrize("n,nu,nd", [(3, 1, 1), (4, 2, 1), (2, None, None)])
def test_fermion_dimension(n, nu, nd):
    b = fermion_basis(n, nu, nd)
    expect = 4 ** n if nu is None else math.comb(n, nu) * math.comb(n, nd)
    assert b.dim == expect
    if nu is not None:
        assert np.all(b.spin_numbers() == [nu, nd])


def test_index_roundtrip_and_lexicographic_order():
    b = boson_basis(4, 3)
    for i, c in enumerate(b.configs):
        assert b.index(c) == i
    keys = [tuple(c) for c in b.configs]
    assert keys == sorted(keys)
    assert b.indices(np.array([[3, 0, 0, 0], [4, 0, 0, 0]])).tolist()[1] == -1


def test_inadmissible_configuration_raises():
    b = blockaded_basis(3)
    with pytest.raises(BasisError):
        b.index([1, 1, 0])
    assert not b.is_admissible([1, 1, 0])
    assert b.is_admissible([1, 0, 1])


def test_build_basis_from_mapping():
    assert build_basis({"kind": "qubit", "n_sites": 3}).dim == 8
    assert build_basis({"kind": "boson", "n_sites": 3, "n_particles": 2}).dim == 6
    with pytest.raises(BasisError):
        build_basis({"kind": "anyon", "n_sites": 2})


def test_tensor_extend_qubits_with_seam_blockade():
    ext = tensor_extend(blockaded_basis(2), blockaded_basis(2), seam_edges=[(1, 2)])
    brute = sum(1 for x in range(16) if not (x & 0b1100 == 0b1100 or x & 0b0011 == 0b0011
                                             or x & 0b0110 == 0b0110))
    assert ext.dim == brute
    with pytest.raises(BasisError):
        tensor_extend(qubit_basis(2), qubit_basis(2), seam_edges=[(0, 9)])


def test_tensor_extend_bosons_allow_any_arrangement():
    ext = tensor_extend(boson_basis(2, [0, 1]), boson_basis(2, 1))
    assert ext.dim == boson_basis(4, [1, 2]).dim
    s, a = ext.split()
    prod = (s >= 0) & (a >= 0)
    assert prod.sum() == 3 * 2


def test_product_state_is_isometry():
    ext = tensor_extend(fermion_basis(2, 1, [0, 1]), fermion_basis(2, 1, 0))
    rng = np.random.default_rng(3)
    phi = random_state(ext.ancilla.dim, rng)
    v = ext.product_state(phi)
    assert np.allclose(v.conj().T @ v, np.eye(ext.system.dim))


def test_vectorize_is_row_major_and_inverts():
    a = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(vectorize(a), [0, 1, 2, 3, 4, 5, 6, 7, 8])
    assert np.array_equal(devectorize(vectorize(a)), a)
    b = np.arange(9.0).reshape(3, 3)[::-1] + 1j
    assert np.isclose(np.vdot(vectorize(a), vectorize(b)), np.trace(a.conj().T @ b))
    with pytest.raises(ValueError):
        devectorize(np.zeros(5))


def test_partial_trace_qubits_matches_reshape_oracle():
    rng = np.random.default_rng(0)
    b = qubit_basis(4)
    psi = random_state(16, rng)
    rho, red = partial_trace(psi, b, [1, 3])
    t = psi.reshape(2, 2, 2, 2)
    oracle = np.einsum("abcd,aBcD->bdBD", t, t.conj()).reshape(4, 4)
    assert red.dim == 4
    assert np.allclose(rho, oracle, atol=1e-12)
    rho_full = np.outer(psi, psi.conj())
    rho2, _ = partial_trace(rho_full, b, [1, 3])
    assert np.allclose(rho2, oracle, atol=1e-12)


def test_partial_trace_fermions_keeps_parity_and_trace():
    rng = np.random.default_rng(1)
    b = fermion_basis(3, 1, 1)
    psi = random_state(b.dim, rng)
    rho, red = partial_trace(psi, b, [0, 2])
    assert np.isclose(np.trace(rho), 1)
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    # number is conserved, so rho is block diagonal in the kept particle number
    n = red.particle_numbers()
    assert np.allclose(rho[n[:, None] != n[None, :]], 0)


def test_embed_vector():
    small = boson_basis(3, 1)
    big = boson_basis(3, [0, 1, 2])
    v = np.array([1.0, 2.0, 3.0])
    out = embed_vector(v, small, big)
    assert np.isclose(np.linalg.norm(out), np.linalg.norm(v))
    assert out[big.index([0, 1, 0])] == 2.0


def test_validate_density_matrix():
    rng = np.random.default_rng(2)
    validate_density_matrix(random_density_matrix(5, rng, rank=2))
    with pytest.raises(ValueError):
        validate_density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        validate_density_matrix(np.eye(2))


def test_basis_state_unit_vector():
    b = qubit_basis(2)
    v = basis_state(b, [1, 0])
    assert v[2] == 1 and np.count_nonzero(v) == 1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 5), seed=st.integers(0, 2 ** 31 - 1), data=st.data())
def test_partial_trace_is_a_density_matrix(n, seed, data):
    b = blockaded_basis(n)
    keep = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True))
    rho = random_density_matrix(b.dim, np.random.default_rng(seed))
    red, _ = partial_trace(rho, b, keep)
    validate_density_matrix(red, tol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), d=st.integers(1, 7))
def test_vectorize_roundtrip_property(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    assert np.array_equal(devectorize(vectorize(a)), a)
