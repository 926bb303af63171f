import numpy as np
import pytest
import scipy.linalg as la

from errors import EcsMisaligned, SingularPotential
from fem.operators import (
    Nuclei,
    SparseOperator,
    apply_mass_inverse,
    assemble_one_body,
    export_coo,
    generalized_eigenpairs,
    mass_matrix,
    position_operators,
    potential_nodes,
    project,
)
from fem.quadrature import gauss_lobatto, reference_element
from fem.space import EcsConfig, build_space
from grid.mesh import SimulationBox, build_uniform
from systems.worker_pool import WorkerPool


def hanging_square(order=1):
    mesh = build_uniform(SimulationBox((0.0, 0.0), (8.0, 8.0)), 4.0).refined([(0, (0, 0))])
    return build_space(mesh, order)


def lowest_energy(space, nuclei):
    ops = assemble_one_body(space, nuclei)
    h = SparseOperator(ops.kinetic.matrix + ops.potential.matrix, "hermitian")
    values, _ = generalized_eigenpairs(h, mass_matrix(space), 1)
    return values[0]


def test_gauss_lobatto_rules():
    points, weights = gauss_lobatto(2)
    np.testing.assert_allclose(points, [-1.0, 1.0])
    np.testing.assert_allclose(weights, [1.0, 1.0])

    points, weights = gauss_lobatto(3)
    np.testing.assert_allclose(points, [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(weights, [1 / 3, 4 / 3, 1 / 3])

    for n in range(2, 9):
        points, weights = gauss_lobatto(n)
        # exact for degree 2n - 3
        for k in range(2 * n - 2):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert np.dot(weights, points**k) == pytest.approx(exact, abs=1e-13)


def test_reference_basis_is_cardinal():
    ref = reference_element(4)
    np.testing.assert_allclose(ref.basis_values(ref.points), np.eye(5), atol=1e-12)
    # derivatives of a linear function are exact
    np.testing.assert_allclose(ref.derivative_matrix @ ref.points, np.ones(5), atol=1e-12)


def test_dof_counts(line_space):
    space = line_space(0.0, 8.0, 4.0, 2)
    assert space.n_dofs == 5
    assert space.n_free == 3

    cube = build_space(build_uniform(SimulationBox((0.0,) * 3, (4.0,) * 3), 4.0), 1)
    assert cube.n_dofs == 8
    assert not cube.constraints


def test_hanging_constraints_average_their_masters():
    space = hanging_square()
    assert len(space.constraints) == 2
    for constraint in space.constraints.values():
        np.testing.assert_allclose(sorted(constraint.coefficients), [0.5, 0.5])
        slave = space.node_coords[constraint.slave]
        masters = space.node_coords[constraint.masters]
        np.testing.assert_allclose(masters.mean(axis=0), slave)


def test_prolongation_reproduces_linears_on_hanging_mesh():
    space = hanging_square()

    def f(p):
        return 1.0 + p[:, 0] - 2.0 * p[:, 1]

    masters = f(space.node_coords[space.master_dofs])
    np.testing.assert_allclose(space.nodal(masters, boundary=True), f(space.node_coords), atol=1e-12)


def test_project_partition_of_unity(line_space):
    space = line_space(-4.0, 4.0, 2.0, 3)
    c = project(space, lambda p: np.ones(len(p)), dirichlet=False)
    np.testing.assert_allclose(c, 1.0, atol=1e-12)


def test_project_reproduces_polynomials(rng):
    mesh = build_uniform(SimulationBox((-2.0, -2.0), (2.0, 2.0)), 2.0)
    space = build_space(mesh, 3)

    def f(p):
        return p[:, 0] ** 3 - 2.0 * p[:, 0] * p[:, 1] ** 2 + 0.5

    c = project(space, f, dirichlet=False)
    points = rng.uniform(-2.0, 2.0, size=(20, 2))
    np.testing.assert_allclose(space.evaluate(c, points, boundary=True), f(points), atol=1e-12)


def test_project_on_hanging_mesh_keeps_linears(rng):
    space = hanging_square()
    c = project(space, lambda p: p[:, 0], dirichlet=False)
    points = rng.uniform(0.0, 8.0, size=(25, 2))
    np.testing.assert_allclose(space.evaluate(c, points, boundary=True), points[:, 0], atol=1e-10)


def test_mass_matrix_single_cell(line_space):
    space = line_space(0.0, 4.0, 4.0, 1)
    np.testing.assert_allclose(mass_matrix(space, boundary=True).to_dense(), np.diag([2.0, 2.0]))


def test_mass_matrix_on_hanging_mesh_is_spd():
    mass = mass_matrix(hanging_square(2), boundary=True).to_dense()
    np.testing.assert_allclose(mass, mass.T, atol=1e-14)
    assert np.linalg.eigvalsh(mass).min() > 0


@pytest.mark.parametrize("deterministic", [True, False])
def test_threaded_assembly_matches_serial(line_space, deterministic):
    space = line_space(-20.0, 20.0, 2.0, 3, ((12.0,), 0.3))
    nuclei = Nuclei(charges=(1.0,), positions=((0.0,),), softening=1.0)
    serial_ops = assemble_one_body(space, nuclei)
    serial_mass = mass_matrix(space).to_dense()

    WorkerPool().configure(3, deterministic=deterministic)
    threaded_ops = assemble_one_body(space, nuclei)
    np.testing.assert_allclose(mass_matrix(space).to_dense(), serial_mass, atol=1e-13)
    np.testing.assert_allclose(threaded_ops.kinetic.to_dense(), serial_ops.kinetic.to_dense(), atol=1e-12)
    np.testing.assert_allclose(threaded_ops.potential.to_dense(), serial_ops.potential.to_dense(), atol=1e-12)
    assert np.iscomplexobj(threaded_ops.kinetic.matrix.data)


def test_apply_mass_inverse(line_space, rng):
    space = line_space(-4.0, 4.0, 2.0, 3)
    mass = mass_matrix(space).matrix
    rhs = rng.normal(size=space.n_free) + 1j * rng.normal(size=space.n_free)
    np.testing.assert_allclose(apply_mass_inverse(space, rhs), rhs / mass.diagonal())

    x = rng.normal(size=space.n_free)
    np.testing.assert_allclose(apply_mass_inverse(space, mass @ x), x, atol=1e-12)


def test_apply_mass_inverse_with_constraints(rng):
    space = hanging_square(2)
    mass = mass_matrix(space).matrix
    assert (mass - np.diag(mass.diagonal())).any()
    rhs = rng.normal(size=space.n_free)
    x = apply_mass_inverse(space, rhs)
    assert np.linalg.norm(mass @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_zero_nuclei_give_zero_potential(line_space):
    space = line_space(-4.0, 4.0, 2.0, 2)
    ops = assemble_one_body(space, Nuclei())
    assert ops.potential.matrix.count_nonzero() == 0


def test_soft_core_hydrogen_ground_energy(line_space):
    space = line_space(-20.0, 20.0, 1.0, 4)
    energy = lowest_energy(space, Nuclei(charges=(1.0,), positions=((0.0,),), softening=1.0))
    assert energy == pytest.approx(-0.6698, abs=1e-3)


def test_generalized_eigenvectors_are_mass_orthonormal(line_space):
    space = line_space(-10.0, 10.0, 2.0, 3)
    ops = assemble_one_body(space, Nuclei(charges=(1.0,), positions=((0.0,),), softening=2.0))
    h = SparseOperator(ops.kinetic.matrix + ops.potential.matrix, "hermitian")
    mass = mass_matrix(space)
    values, vectors = generalized_eigenpairs(h, mass, 3)
    assert np.all(np.diff(values) > 0)
    np.testing.assert_allclose(vectors.T @ (mass.matrix @ vectors), np.eye(3), atol=1e-10)


def test_operators_without_ecs_are_hermitian(line_space):
    space = line_space(-8.0, 8.0, 2.0, 3)
    ops = assemble_one_body(space, Nuclei(charges=(1.0,), positions=((0.5,),), softening=1.0))
    assert ops.kinetic.hermitian_defect() < 1e-12
    assert ops.potential.hermitian_defect() < 1e-12
    # the gradient is anti-symmetric on the Dirichlet space
    grad = ops.gradient[0].to_dense()
    np.testing.assert_allclose(grad, -grad.T, atol=1e-12)


def test_ecs_leaves_interior_entries_unchanged(line_space):
    nuclei = Nuclei(charges=(1.0,), positions=((0.0,),), softening=1.0)
    space = line_space(-16.0, 16.0, 2.0, 3, ((8.0,), 0.4))
    scaled = assemble_one_body(space, nuclei)
    plain = assemble_one_body(space, nuclei, use_ecs=False)
    inner = space.interior_free_dofs()

    for a, b in ((scaled.kinetic, plain.kinetic), (scaled.potential, plain.potential)):
        block_a = a.to_dense()[np.ix_(inner, inner)]
        block_b = b.to_dense()[np.ix_(inner, inner)]
        np.testing.assert_allclose(block_a, block_b, atol=1e-13)

    kinetic = scaled.kinetic.to_dense()
    np.testing.assert_allclose(kinetic, kinetic.T, atol=1e-13)
    assert scaled.kinetic.hermitian_defect() > 1e-6
    assert scaled.kinetic.symmetry_hint == "complex-symmetric"


def test_ecs_keeps_bound_state(line_space):
    """The rotated continuum leaves the bound eigenvalue in place"""
    nuclei = Nuclei(charges=(1.0,), positions=((0.0,),), softening=1.0)
    space = line_space(-20.0, 20.0, 1.0, 4, ((12.0,), 0.3))
    scaled = assemble_one_body(space, nuclei)
    plain = assemble_one_body(space, nuclei, use_ecs=False)
    mass = mass_matrix(space).to_dense()

    values = la.eigvals((scaled.kinetic.matrix + scaled.potential.matrix).toarray(), mass)
    reference = la.eigvalsh((plain.kinetic.matrix + plain.potential.matrix).toarray(), mass)[0]
    bound = values[np.argmin(np.abs(values - reference))]
    assert abs(bound - reference) < 1e-6


def test_ecs_surface_must_not_cut_cells():
    mesh = build_uniform(SimulationBox((-8.0,), (8.0,)), 2.0)
    with pytest.raises(EcsMisaligned):
        build_space(mesh, 1, EcsConfig(r0=(5.0,), theta=0.3))
    with pytest.raises(EcsMisaligned):
        build_space(mesh, 1, EcsConfig(r0=(8.0,), theta=0.3))


def test_ecs_stretch():
    ecs = EcsConfig(r0=(2.0,), theta=0.5)
    z = ecs.stretch(np.array([[1.0], [3.0], [-3.0]]))[:, 0]
    np.testing.assert_allclose(z, [1.0, 2.0 + np.exp(0.5j), -2.0 - np.exp(0.5j)])
    with pytest.raises(ValueError):
        EcsConfig(r0=(2.0,), theta=2.0)


def test_bare_coulomb_on_a_node_is_singular(line_space):
    space = line_space(-2.0, 2.0, 1.0, 1)
    nuclei = Nuclei(charges=(1.0,), positions=((0.0,),))
    with pytest.raises(SingularPotential):
        potential_nodes(space, nuclei)

    moved = nuclei.snapped(space.node_coords)
    assert moved.positions[0][0] == pytest.approx(1e-8)
    assert np.all(np.isfinite(potential_nodes(space, moved)))


def test_position_operator_centre(line_space):
    """A symmetric density has zero dipole"""
    space = line_space(-6.0, 6.0, 2.0, 3)
    phi = project(space, lambda p: np.exp(-p[:, 0] ** 2))
    (x,) = position_operators(space)
    assert abs(phi @ (x.matrix @ phi)) < 1e-12


def test_export_coo(tmp_path, line_space):
    space = line_space(0.0, 4.0, 2.0, 1)
    op = mass_matrix(space, boundary=True)
    path = tmp_path / "mass.txt"
    export_coo(op, str(path))
    rows = np.loadtxt(path, ndmin=2)
    assert rows.shape == (op.matrix.nnz, 4)
    np.testing.assert_allclose(sorted(rows[:, 2]), sorted(op.matrix.data))
