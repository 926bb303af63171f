import numpy as np
import pytest
import scipy.sparse as sp

from ci import (
    CiHamiltonian,
    OrbitalIntegrals,
    apply_x,
    enumerate_determinants,
    ground_state,
    integrals,
    overlap,
    rdm1,
    rdms,
    sigma,
)
from ci.determinants import string_list
from errors import Overflow
from fem.operators import Nuclei, assemble_one_body
from meanfield import Interaction, build_table
from systems.worker_pool import WorkerPool


def annihilators(n_modes):
    """Jordan-Wigner annihilation operators on the 2^n occupation basis"""
    dim = 1 << n_modes
    ops = []
    for j in range(n_modes):
        rows, cols, vals = [], [], []
        for state in range(dim):
            if state >> j & 1:
                rows.append(state ^ (1 << j))
                cols.append(state)
                vals.append(-1.0 if bin(state & ((1 << j) - 1)).count("1") % 2 else 1.0)
        ops.append(sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim)))
    return ops


class FockOracle:
    """Second-quantized reference with modes alpha_0..alpha_{M-1}, beta_0..beta_{M-1}"""

    def __init__(self, space):
        self.space = space
        m = space.n_orbitals
        self.m = m
        a = annihilators(2 * m)
        self.a = [[a[p], a[m + p]] for p in range(m)]
        self.positions = []
        for i in range(space.dimension):
            alpha, beta = space.occupations(i)
            self.positions.append(sum(1 << p for p in alpha) + sum(1 << (m + p) for p in beta))

    def create(self, p, spin):
        return self.a[p][spin].T.conj()

    def hamiltonian(self, h, chem):
        m, spins = self.m, (0, 1)
        total = sp.csr_matrix((1 << 2 * m, 1 << 2 * m), dtype=complex)
        for p in range(m):
            for q in range(m):
                for s in spins:
                    total = total + h[p, q] * (self.create(p, s) @ self.a[q][s])
        for p in range(m):
            for q in range(m):
                for r in range(m):
                    for t in range(m):
                        for s in spins:
                            for u in spins:
                                op = self.create(p, s) @ self.create(r, u) @ self.a[t][u] @ self.a[q][s]
                                total = total + 0.5 * chem[p, q, r, t] * op
        return total.toarray()[np.ix_(self.positions, self.positions)]

    def embed(self, c):
        v = np.zeros(1 << 2 * self.m, dtype=complex)
        v[self.positions] = c
        return v

    def rdms(self, c):
        m, spins = self.m, (0, 1)
        v = self.embed(c)
        one = np.zeros((m, m), dtype=complex)
        two = np.zeros((m, m, m, m), dtype=complex)
        for p in range(m):
            for q in range(m):
                one[p, q] = sum(np.vdot(v, self.create(q, s) @ (self.a[p][s] @ v)) for s in spins)
                for s_ in range(m):
                    for r in range(m):
                        two[p, q, s_, r] = sum(
                            np.vdot(v, self.create(s_, s) @ self.create(r, u) @ self.a[q][u] @ self.a[p][s] @ v)
                            for s in spins
                            for u in spins
                        )
        return one, two


def random_integrals(rng, m, n_points=7):
    """Hermitian h and g from random orbitals with a symmetric real kernel"""
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    h = 0.5 * (a + a.conj().T)
    phi = rng.normal(size=(m, n_points)) + 1j * rng.normal(size=(m, n_points))
    x = np.linspace(-1.0, 1.0, n_points)
    kernel = 1.0 / np.sqrt((x[:, None] - x[None, :]) ** 2 + 0.5)
    pair = np.conj(phi)[:, None, :] * phi[None, :, :]
    chem = np.einsum("pqx,xy,rsy->pqrs", pair, kernel, pair)
    return OrbitalIntegrals(h=h, g=chem.transpose(0, 2, 1, 3))


def random_vector(rng, n):
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return c / np.linalg.norm(c)


def test_determinant_counts():
    assert enumerate_determinants(1, 1, 2).dimension == 4
    assert enumerate_determinants(1, 1, 6).dimension == 36
    assert enumerate_determinants(5, 5, 6).dimension == 36
    assert enumerate_determinants(2, 1, 4).shape == (6, 4)
    assert string_list(3, 2) == (3, 5, 6)


def test_enumerate_determinants_limits():
    with pytest.raises(Overflow):
        enumerate_determinants(5, 5, 20, cap=1000)
    with pytest.raises(ValueError):
        enumerate_determinants(3, 0, 2)


def test_determinant_positions_are_alpha_major():
    space = enumerate_determinants(1, 1, 3)
    assert space.index(0b001, 0b010) == 1
    assert space.index(0b010, 0b001) == 3
    assert space.occupations(5) == ([1], [2])
    assert space.reference_vector()[0] == 1.0


def test_sigma_single_electron():
    space = enumerate_determinants(1, 0, 1)
    ints = OrbitalIntegrals(h=np.array([[-0.5]]), g=np.full((1, 1, 1, 1), 0.7))
    c = np.array([0.6 + 0.8j])
    np.testing.assert_allclose(sigma(space, ints, c), -0.5 * c)


def test_closed_shell_expectation():
    space = enumerate_determinants(1, 1, 2)
    h = np.diag([-1.2, 0.3]).astype(complex)
    g = np.zeros((2, 2, 2, 2), dtype=complex)
    g[0, 0, 0, 0] = 0.8
    ham = CiHamiltonian(space, OrbitalIntegrals(h=h, g=g))
    assert ham.expectation(space.reference_vector()) == pytest.approx(2 * -1.2 + 0.8)


@pytest.mark.parametrize("electrons", [(1, 1, 3), (2, 1, 4), (2, 2, 3)])
def test_hamiltonian_matches_fock_space(electrons, rng):
    space = enumerate_determinants(*electrons)
    ints = random_integrals(rng, space.n_orbitals)
    ham = CiHamiltonian(space, ints)
    expected = FockOracle(space).hamiltonian(ints.h, ints.chemist)

    np.testing.assert_allclose(ham.dense(), expected, atol=1e-10)
    c = random_vector(rng, space.dimension)
    np.testing.assert_allclose(ham._sigma_strings(c), expected @ c, atol=1e-10)


def test_rdms_match_fock_space(rng):
    space = enumerate_determinants(2, 1, 4)
    c = random_vector(rng, space.dimension)
    pair = rdms(space, c)
    one, two = FockOracle(space).rdms(c)

    np.testing.assert_allclose(pair.one, one, atol=1e-12)
    np.testing.assert_allclose(pair.two, two, atol=1e-12)
    np.testing.assert_allclose(rdm1(space, c), one, atol=1e-12)


@pytest.mark.parametrize("deterministic", [True, False])
def test_threaded_sigma_and_rdms_match_serial(deterministic, rng):
    space = enumerate_determinants(3, 2, 6)
    ints = random_integrals(rng, space.n_orbitals)
    c = random_vector(rng, space.dimension)
    ham = CiHamiltonian(space, ints)
    serial_sigma = ham._sigma_strings(c)
    serial = rdms(space, c)

    WorkerPool().configure(3, deterministic=deterministic)
    assert len(WorkerPool().split(space.shape[0])) == 12
    np.testing.assert_allclose(ham._sigma_strings(c), serial_sigma, atol=1e-12)
    np.testing.assert_allclose(ham._sigma_strings(c), ham.dense() @ c, atol=1e-10)
    threaded = rdms(space, c)
    np.testing.assert_allclose(threaded.one, serial.one, atol=1e-12)
    np.testing.assert_allclose(threaded.two, serial.two, atol=1e-12)


def test_closed_shell_density():
    space = enumerate_determinants(1, 1, 3)
    pair = rdms(space, space.reference_vector())
    np.testing.assert_allclose(pair.one, np.diag([2.0, 0.0, 0.0]), atol=1e-14)
    np.testing.assert_allclose(pair.natural_occupations(), [2.0, 0.0, 0.0], atol=1e-14)


def test_rdm_sum_rules(rng):
    space = enumerate_determinants(5, 5, 6)
    n = space.n_electrons
    pair = rdms(space, random_vector(rng, space.dimension))

    assert np.trace(pair.one) == pytest.approx(n)
    assert np.einsum("pqpq->", pair.two) == pytest.approx(n * (n - 1))
    np.testing.assert_allclose(np.einsum("pqsq->ps", pair.two), (n - 1) * pair.one, atol=1e-10)
    np.testing.assert_allclose(pair.one, pair.one.conj().T, atol=1e-12)


def test_rdm_energy_equals_expectation(rng):
    space = enumerate_determinants(2, 2, 4)
    ints = random_integrals(rng, 4)
    c = random_vector(rng, space.dimension)
    ham = CiHamiltonian(space, ints)
    assert rdms(space, c).energy(ints.h, ints.g) == pytest.approx(ham.expectation(c), abs=1e-10)


def test_ground_state_is_lowest_eigenvalue(rng):
    space = enumerate_determinants(2, 1, 4)
    ints = random_integrals(rng, 4)
    ham = CiHamiltonian(space, ints)
    energy, vector = ground_state(ham)

    assert energy.real == pytest.approx(np.linalg.eigvalsh(ham.dense()).min())
    assert np.linalg.norm(vector) == pytest.approx(1.0)
    np.testing.assert_allclose(ham.sigma(vector), energy * vector, atol=1e-10)


def test_apply_x_is_one_body_part(rng):
    space = enumerate_determinants(2, 1, 3)
    x = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    c = random_vector(rng, space.dimension)
    ham = CiHamiltonian(space, OrbitalIntegrals(h=x, g=np.zeros((3,) * 4, dtype=complex)))
    np.testing.assert_allclose(apply_x(space, x, c), ham.dense() @ c, atol=1e-12)


def test_overlap_of_rotated_orbitals(rng):
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
    orbitals = q[:2]
    theta = 0.3
    rotated = np.array(
        [
            np.cos(theta) * orbitals[0] + np.sin(theta) * orbitals[1],
            -np.sin(theta) * orbitals[0] + np.cos(theta) * orbitals[1],
        ]
    )
    mass = np.eye(5)

    one = enumerate_determinants(1, 0, 2)
    c = one.reference_vector()
    assert overlap(one, orbitals, c, rotated, c, mass) == pytest.approx(np.cos(theta))

    two = enumerate_determinants(1, 1, 2)
    c = two.reference_vector()
    assert overlap(two, orbitals, c, rotated, c, mass) == pytest.approx(np.cos(theta) ** 2)

    c_a = random_vector(rng, two.dimension)
    c_b = random_vector(rng, two.dimension)
    assert overlap(two, orbitals, c_a, orbitals, c_b, mass) == pytest.approx(np.vdot(c_a, c_b))


def test_integrals_from_the_grid(line_space, rng):
    space = line_space(-6.0, 6.0, 2.0, 3)
    ops = assemble_one_body(space, Nuclei(charges=(1.0,), positions=((0.0,),), softening=1.0))
    orbitals = rng.normal(size=(2, space.n_free)) + 1j * rng.normal(size=(2, space.n_free))
    table = build_table(space, orbitals, Interaction(kind="soft_core", softening=1.0))

    ints = integrals(space, orbitals, table, ops)
    h1 = ops.h1()
    assert ints.h[1, 1] == pytest.approx(np.vdot(orbitals[1], h1 @ orbitals[1]))
    assert ints.hermitian_defect() < 1e-12
    assert integrals(space, orbitals, table, ops, np.array([0.4])).hermitian_defect() < 1e-12

    nodal = space.nodal(orbitals)
    w = space.node_weights
    x = space.node_coords[:, 0]
    kernel = 1.0 / np.sqrt((x[:, None] - x[None, :]) ** 2 + 1.0)
    # g[p, q, s, r] = sum_xy w_x w_y phi_p^*(x) phi_s(x) K(x, y) phi_q^*(y) phi_r(y)
    left = np.conj(nodal)[:, None, :] * nodal[None, :, :] * w
    expected = np.einsum("psx,xy,qry->pqsr", left, kernel, left)
    np.testing.assert_allclose(ints.g, expected, rtol=1e-10, atol=1e-12)
