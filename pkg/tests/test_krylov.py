import logging

import numpy as np
import pytest
from scipy.linalg import expm

from eom import WaveFunction, freeze, lowdin, total_energy
from errors import NoConvergence, NonFinite
from fem.operators import SparseOperator, generalized_eigenpairs, project
from krylov import ArnoldiWorkspace, arnoldi_exp, exp_hessenberg, propagate_imaginary
from systems.event_system import EventSystem, SimEvent
from systems.propagation import KrylovStatistics, RealTimePropagator


def hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def test_identity_breaks_down_immediately():
    v = np.array([1.0, 2.0, -1.0], dtype=complex)
    result, report = arnoldi_exp(lambda x: x, v, 0.3)
    assert report.dim_used == 1
    assert report.happy_breakdown
    np.testing.assert_allclose(result, np.exp(-0.3j) * v)


def test_diagonal_matrix():
    d = np.array([1.0, 2.0, 3.0])
    v = np.ones(3, dtype=complex)
    result, report = arnoldi_exp(lambda x: d * x, v, 0.7)
    np.testing.assert_allclose(result, np.exp(-0.7j * d), atol=1e-12)
    assert report.dim_used <= 3


@pytest.mark.parametrize("dt", [0.01, 0.1])
def test_matches_dense_exponential(dt, rng):
    workspace = ArnoldiWorkspace(m_max=30, tol=1e-12)
    for _ in range(50):
        a = hermitian(rng, 64)
        v = rng.normal(size=64) + 1j * rng.normal(size=64)
        result, report = arnoldi_exp(lambda x: a @ x, v, dt, m_max=30, tol=1e-12, workspace=workspace)
        exact = expm(-1j * dt * a) @ v
        assert np.linalg.norm(result - exact) <= 1e-9 * np.linalg.norm(exact)
        assert report.error_estimate < 1e-12 or report.happy_breakdown


@pytest.mark.parametrize("dt", [0.01, 0.1])
def test_matches_dense_exponential_non_hermitian(dt, rng):
    workspace = ArnoldiWorkspace(m_max=30, tol=1e-10)
    for _ in range(50):
        a = (rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))) / 8.0
        v = rng.normal(size=64) + 1j * rng.normal(size=64)
        result, _ = arnoldi_exp(lambda x: a @ x, v, dt, m_max=30, tol=1e-10, workspace=workspace)
        exact = expm(-1j * dt * a) @ v
        assert np.linalg.norm(result - exact) <= 1e-9 * np.linalg.norm(exact)


def test_non_hermitian_and_imaginary_steps(rng):
    a = rng.normal(size=(20, 20)) + 1j * rng.normal(size=(20, 20))
    v = rng.normal(size=20) + 0j
    for dt in (0.05, -0.05j):
        result, _ = arnoldi_exp(lambda x: a @ x, v, dt, m_max=20, tol=1e-13)
        exact = expm(-1j * dt * a) @ v
        assert np.linalg.norm(result - exact) <= 1e-9 * np.linalg.norm(exact)


def test_hermitian_propagation_keeps_the_norm(rng):
    a = hermitian(rng, 40)
    v = rng.normal(size=40) + 1j * rng.normal(size=40)
    result, _ = arnoldi_exp(lambda x: a @ x, v, 0.05, m_max=25, tol=1e-13)
    assert np.linalg.norm(result) == pytest.approx(np.linalg.norm(v), rel=1e-11)


def test_zero_vector():
    result, report = arnoldi_exp(lambda x: 2 * x, np.zeros(4), 0.1)
    assert not result.any()
    assert report.dim_used == 0


def test_exhausted_subspace_is_reported(rng, caplog):
    a = 50.0 * hermitian(rng, 30)
    v = rng.normal(size=30) + 0j
    with caplog.at_level(logging.WARNING, logger="krylov.arnoldi"):
        _, report = arnoldi_exp(lambda x: a @ x, v, 1.0, m_max=3, tol=1e-10)
    assert report.dim_used == 3
    assert not report.happy_breakdown
    assert report.error_estimate >= 1e-10
    assert "Krylov subspace exhausted" in caplog.text


def test_non_finite_matvec():
    with pytest.raises(NonFinite):
        arnoldi_exp(lambda x: np.full_like(x, np.nan), np.ones(3), 0.1)


def test_step_events_feed_statistics(rng):
    stats = KrylovStatistics()
    stats.attach()
    a = hermitian(rng, 10)
    for _ in range(3):
        arnoldi_exp(lambda x: a @ x, np.ones(10, dtype=complex), 0.1, m_max=10)
    arnoldi_exp(lambda x: x, np.ones(10, dtype=complex), 0.1)
    stats.detach()

    assert stats.steps == 4
    assert stats.breakdowns >= 1
    assert "breakdown" in stats.summary()
    assert not EventSystem().has_subscribers(SimEvent.KRYLOV_STEP)


def test_exp_hessenberg():
    np.testing.assert_allclose(exp_hessenberg(np.array([[2.0]]), 0.5), [np.exp(-1j)])
    # nilpotent: exp(-i dt N) e1 = e1 - i dt N e1
    nilpotent = np.array([[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(exp_hessenberg(nilpotent, 0.3), [1.0, -0.3j], atol=1e-15)
    with pytest.raises(ValueError):
        exp_hessenberg(nilpotent, 0.3, method="taylor")


def test_exp_hessenberg_methods_agree(rng):
    h = np.triu(rng.normal(size=(12, 12)), -1) + 0j
    np.testing.assert_allclose(exp_hessenberg(h, 0.2, "pade"), exp_hessenberg(h, 0.2, "eig"), atol=1e-10)


def perturbed_ground_orbital(system, rng):
    h = SparseOperator(system.h1(0.0), "hermitian")
    energies, vectors = generalized_eigenpairs(h, system.mass, 1)
    guess = project(system.space, lambda p: np.exp(-np.abs(p[:, 0])))
    guess = guess + 0.1 * vectors[:, 0] + 0.01 * rng.normal(size=system.n_free)
    return energies[0], guess[None, :]


def test_imaginary_time_finds_one_electron_ground_state(soft_core_system, rng):
    system = soft_core_system(1, 0, 1, charge=1.0, half_width=20.0, coarse=2.0, order=4)
    exact, guess = perturbed_ground_orbital(system, rng)
    wf = WaveFunction(guess, [1.0], system.determinants)

    result = propagate_imaginary(wf, system, dt_imag=0.5, tol_energy=1e-12, max_steps=2000)
    assert result.converged
    assert result.energy == pytest.approx(exact, abs=1e-8)
    assert np.all(np.diff(result.energies[5:]) <= 1e-12)
    assert result.steps == len(result.energies) - 1
    assert result.wavefunction.orthonormality_defect(system.mass.matrix) < 1e-10


def test_imaginary_time_step_budget(soft_core_system, rng):
    system = soft_core_system(1, 0, 1, charge=1.0, half_width=20.0, coarse=2.0, order=4)
    _, guess = perturbed_ground_orbital(system, rng)
    wf = WaveFunction(guess, [1.0], system.determinants)

    with pytest.raises(NoConvergence):
        propagate_imaginary(wf, system, dt_imag=0.01, tol_energy=1e-14, max_steps=3)
    result = propagate_imaginary(wf, system, dt_imag=0.01, tol_energy=1e-14, max_steps=3, strict=False)
    assert not result.converged
    assert result.steps == 3
    with pytest.raises(ValueError):
        propagate_imaginary(wf, system, dt_imag=0.0, tol_energy=1e-8)


def helium_start(system, rng):
    orbitals = lowdin(
        np.array(
            [
                project(system.space, lambda p: np.exp(-p[:, 0] ** 2)),
                project(system.space, lambda p: p[:, 0] * np.exp(-p[:, 0] ** 2)),
            ]
        ),
        system.mass.matrix,
    )
    ci = rng.normal(size=system.determinants.dimension) + 1j * rng.normal(size=system.determinants.dimension)
    return WaveFunction(orbitals, ci / np.linalg.norm(ci), system.determinants)


def test_splittings_agree_for_small_steps(soft_core_system, rng):
    system = soft_core_system(1, 1, 2, half_width=8.0)
    start = helium_start(system, rng)
    states = {}
    for splitting in ("sequential", "strang"):
        propagator = RealTimePropagator(system, dt=0.005, splitting=splitting)
        wf = start.copy()
        for step in range(4):
            wf, _ = propagator.step(wf, step * 0.005)
        states[splitting] = wf
    np.testing.assert_allclose(states["sequential"].ci, states["strang"].ci, atol=5e-3)
    np.testing.assert_allclose(states["sequential"].orbitals, states["strang"].orbitals, atol=1e-3)


def test_field_free_propagation_conserves_energy(soft_core_system, rng):
    system = soft_core_system(1, 1, 2, half_width=8.0)
    wf = helium_start(system, rng)
    first = total_energy(freeze(system, wf, 0.0)).real
    propagator = RealTimePropagator(system, dt=0.01, splitting="strang")
    for step in range(25):
        wf, _ = propagator.step(wf, step * 0.01)
    assert total_energy(freeze(system, wf, 0.25)).real == pytest.approx(first, abs=5e-3)


def test_propagator_validation(soft_core_system):
    system = soft_core_system(1, 1, 1)
    with pytest.raises(ValueError):
        RealTimePropagator(system, dt=0.0)
    with pytest.raises(ValueError):
        RealTimePropagator(system, dt=0.1, splitting="yoshida")
