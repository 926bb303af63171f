import meshio
import numpy as np
import pytest

from errors import BudgetExceeded, NonDivisibleExtent
from fem.operators import Nuclei, coulomb_target
from fem.space import EcsConfig, build_space
from grid.cell_region import CellRegion
from grid.mesh import SimulationBox, build_uniform
from grid.mesh_export import dump_text, export_vtk, load_text
from grid.refinement import RefinementPolicy, interpolate_cells, kelly_indicator, refine_adapt
from systems.event_system import EventSystem, SimEvent


def corner_refined_square():
    """[0,8]^2 with coarse 4, lower-left cell split twice towards the centre"""
    mesh = build_uniform(SimulationBox((0.0, 0.0), (8.0, 8.0)), 4.0)
    mesh = mesh.refined([(0, (0, 0))])
    return mesh.refined([(1, (1, 1))])


def test_build_uniform_counts():
    """Uniform tilings have extent/coarse cells per axis"""
    cube = build_uniform(SimulationBox((0.0,) * 3, (8.0,) * 3), 4.0)
    assert cube.n_leaves == 8
    assert all(leaf.size == 4.0 for leaf in cube.leaves)

    water = build_uniform(SimulationBox((-70.0, -30.0, -30.0), (70.0, 30.0, 30.0)), 4.0)
    assert water.n_leaves == 35 * 15 * 15

    single = build_uniform(SimulationBox((0.0,), (4.0,)), 4.0)
    assert single.n_leaves == 1


def test_build_uniform_rejects_non_divisible_box():
    with pytest.raises(NonDivisibleExtent):
        build_uniform(SimulationBox((0.0,), (10.0,)), 4.0)


def test_box_rejects_inverted_corners():
    with pytest.raises(ValueError):
        SimulationBox((1.0,), (0.0,))


def test_refined_returns_new_balanced_mesh():
    """Splitting next to coarse cells forces them to split as well"""
    base = build_uniform(SimulationBox((0.0, 0.0), (8.0, 8.0)), 4.0)
    mesh = corner_refined_square()

    assert base.n_leaves == 4
    assert mesh.n_leaves == 19
    assert mesh.is_balanced()
    assert not mesh.cell((0, (1, 1))).is_leaf
    assert mesh.leaf_volume() == pytest.approx(64.0)
    assert mesh.distinct_sizes() == [2.0, 1.0]


def test_refined_rejects_non_leaf():
    mesh = corner_refined_square()
    with pytest.raises(ValueError):
        mesh.refined([(0, (0, 0))])


def test_find_leaf_and_face_neighbors():
    mesh = build_uniform(SimulationBox((0.0,), (8.0,)), 4.0).refined([(0, (0,))])
    keys = [leaf.key for leaf in mesh.leaves]
    assert keys == [(1, (0,)), (1, (1,)), (0, (1,))]

    assert mesh.find_leaf([0.5]) == 0
    assert mesh.find_leaf([5.0]) == 2
    assert mesh.face_neighbors(2, 0, 0) == [1]
    assert mesh.face_neighbors(0, 0, 0) == []


def test_coarse_face_sees_all_finer_neighbors():
    mesh = build_uniform(SimulationBox((0.0, 0.0), (8.0, 4.0)), 4.0).refined([(0, (0, 0))])
    coarse = mesh.leaf_index[(0, (1, 0))]
    neighbors = mesh.face_neighbors(coarse, 0, 0)
    assert sorted(mesh.leaves[j].key for j in neighbors) == [(1, (1, 0)), (1, (1, 1))]


def test_same_as_tracks_leaf_structure():
    a = corner_refined_square()
    b = corner_refined_square()
    assert a.same_as(b)
    assert not a.same_as(build_uniform(SimulationBox((0.0, 0.0), (8.0, 8.0)), 4.0))


def test_kelly_constant_and_linear_fields_vanish():
    mesh = corner_refined_square()
    for f in (lambda p: np.full(len(p), 3.0), lambda p: 2.0 * p[:, 0] - p[:, 1]):
        eta = kelly_indicator(mesh, interpolate_cells(mesh, f, order=2))
        np.testing.assert_allclose(eta, 0.0, atol=1e-10)


def test_kelly_abs_on_two_unit_cells():
    """|x| has a gradient jump of 2 at x=0, so eta^2 = 2^2/24 on both cells"""
    mesh = build_uniform(SimulationBox((-1.0,), (1.0,)), 1.0)
    eta = kelly_indicator(mesh, interpolate_cells(mesh, lambda p: np.abs(p[:, 0]), order=1))
    np.testing.assert_allclose(eta**2, [4.0 / 24.0, 4.0 / 24.0], rtol=1e-12)


def test_refine_adapt_infinite_threshold_is_identity():
    mesh = build_uniform(SimulationBox((-16.0,), (16.0,)), 4.0)
    policy = RefinementPolicy(threshold=np.inf, min_size=0.25, max_size=4.0)
    assert refine_adapt(mesh, lambda p: np.abs(p[:, 0]), policy).same_as(mesh)


def test_refine_adapt_concentrates_at_nucleus():
    """Leaf size never shrinks moving away from a nucleus at the origin"""
    mesh = build_uniform(SimulationBox((-16.0,), (16.0,)), 4.0)
    target = coulomb_target(Nuclei(charges=(1.0,), positions=((0.0,),)))
    passes = []
    EventSystem().subscribe(SimEvent.REFINEMENT_PASS, lambda e: passes.append(e.data["leaves"]))

    adapted = refine_adapt(mesh, target, RefinementPolicy(threshold=0.005, min_size=0.25, max_size=4.0))

    assert adapted.is_balanced()
    assert passes and passes[-1] == adapted.n_leaves
    sizes = adapted.leaf_sizes()
    assert sizes.min() == pytest.approx(0.25)
    touching = adapted.leaves_touching([0.0])
    assert all(adapted.leaves[i].size == pytest.approx(0.25) for i in touching)

    centers = np.array([leaf.center[0] for leaf in adapted.leaves])
    right = np.argsort(centers[centers > 0])
    left = np.argsort(-centers[centers < 0])
    assert np.all(np.diff(sizes[centers > 0][right]) >= 0)
    assert np.all(np.diff(sizes[centers < 0][left]) >= 0)


def test_refine_adapt_is_deterministic():
    mesh = build_uniform(SimulationBox((-8.0, -8.0), (8.0, 8.0)), 4.0)
    target = coulomb_target(Nuclei(charges=(1.0,), positions=((0.3, -0.2),), softening=0.1))
    policy = RefinementPolicy(threshold=0.05, min_size=0.5, max_size=4.0)
    assert refine_adapt(mesh, target, policy).same_as(refine_adapt(mesh, target, policy))


def test_refine_adapt_splits_to_max_size_first():
    mesh = build_uniform(SimulationBox((0.0,), (8.0,)), 8.0)
    policy = RefinementPolicy(threshold=np.inf, min_size=1.0, max_size=2.0)
    adapted = refine_adapt(mesh, lambda p: np.zeros(len(p)), policy)
    assert adapted.n_leaves == 4
    assert adapted.distinct_sizes() == [2.0]


def test_refine_adapt_budget():
    mesh = build_uniform(SimulationBox((-8.0,), (8.0,)), 4.0)
    target = coulomb_target(Nuclei(charges=(1.0,), positions=((0.0,),), softening=0.01))
    policy = RefinementPolicy(threshold=1e-4, min_size=0.25, max_size=4.0, max_leaves=5)
    with pytest.raises(BudgetExceeded):
        refine_adapt(mesh, target, policy)


def test_refinement_policy_validation():
    with pytest.raises(ValueError):
        RefinementPolicy(threshold=0.1, min_size=2.0, max_size=1.0)
    with pytest.raises(ValueError):
        RefinementPolicy(threshold=0.0, min_size=1.0, max_size=1.0)


def test_coulomb_target_is_finite_on_a_nucleus():
    target = coulomb_target(Nuclei(charges=(1.0,), positions=((0.0, 0.0, 0.0),)))
    values = target(np.zeros((1, 3)))
    assert np.all(np.isfinite(values))
    assert values[0] > 1e7


def test_cell_regions():
    mesh = build_uniform(SimulationBox((-8.0,), (8.0,)), 2.0)
    space = build_space(mesh, 1, EcsConfig(r0=(4.0,), theta=0.3))
    regions = dict(zip((leaf.anchor[0] for leaf in mesh.leaves), space.regions))
    assert regions[-8.0] is CellRegion.ABSORBING
    assert regions[4.0] is CellRegion.ABSORBING
    assert regions[-4.0] is CellRegion.INTERIOR
    assert regions[2.0] is CellRegion.INTERIOR

    plain = build_space(mesh, 1)
    assert plain.regions[0] is CellRegion.BOUNDARY
    assert plain.regions[-1] is CellRegion.BOUNDARY
    assert [r.code for r in CellRegion] == [0, 1, 2]


def test_dump_text_and_vtk(tmp_path):
    mesh = corner_refined_square()
    text_path = str(tmp_path / "mesh.txt")
    dump_text(mesh, text_path)
    rows = load_text(text_path)
    assert rows.shape == (mesh.n_leaves, 4)
    np.testing.assert_array_equal(rows[:, 0], [leaf.level for leaf in mesh.leaves])
    np.testing.assert_allclose(rows[:, 3], mesh.leaf_sizes())

    vtk_path = str(tmp_path / "mesh.vtk")
    space = build_space(mesh, 1)
    export_vtk(mesh, vtk_path, space.regions)
    loaded = meshio.read(vtk_path)
    assert sum(len(block.data) for block in loaded.cells) == mesh.n_leaves
    assert "level" in loaded.cell_data
    assert "region" in loaded.cell_data
