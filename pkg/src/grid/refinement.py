import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from errors import BudgetExceeded
from fem.quadrature import reference_element
from grid.mesh import GEOMETRY_TOL, Mesh
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray], np.ndarray]

KELLY_CONSTANT = 1.0 / 24.0


@dataclass(frozen=True)
class RefinementPolicy:
    threshold: float
    min_size: float
    max_size: float
    max_passes: int = 10
    order: int = 1
    max_leaves: Optional[int] = None

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("Refinement threshold must be positive")
        if not 0 < self.min_size <= self.max_size:
            raise ValueError("Refinement needs 0 < min_size <= max_size")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


@dataclass
class CellField:
    """Per-leaf nodal values of a degree-p Lagrange interpolant"""

    order: int
    values: np.ndarray  # [n_leaves, (p+1)^d]

    def gradient(self, mesh: Mesh, leaf: int, points: np.ndarray, axis: int) -> np.ndarray:
        """d/dx_axis of the leaf polynomial at physical points [n, d]"""
        cell = mesh.leaves[leaf]
        ref = reference_element(self.order)
        xi = 2.0 * (np.atleast_2d(points) - cell.anchor) / cell.size - 1.0
        basis = ref.evaluate(xi, derivative_axis=axis)
        return basis @ self.values[leaf] * (2.0 / cell.size)


def interpolate_cells(mesh: Mesh, f: ScalarFunction, order: int = 1) -> CellField:
    """Interpolate f at every leaf's Gauss-Lobatto nodes"""
    ref = reference_element(order)
    xi = ref.tensor_points(mesh.dimension)
    anchors = mesh.anchors()
    sizes = mesh.leaf_sizes()
    points = anchors[:, None, :] + 0.5 * sizes[:, None, None] * (xi[None, :, :] + 1.0)
    values = np.asarray(f(points.reshape(-1, mesh.dimension)))
    return CellField(order=order, values=values.reshape(mesh.n_leaves, len(xi)))


def face_diameter(size: float, dimension: int) -> float:
    return size if dimension == 1 else size * np.sqrt(dimension - 1)


def _face_rule(cell, axis: int, side: int, order: int, dimension: int):
    ref = reference_element(order)
    tangential = ref.tensor_points(dimension - 1)
    weights = ref.tensor_weights(dimension - 1) * (0.5 * cell.size) ** (dimension - 1)
    xi = np.insert(tangential, axis, 1.0 if side else -1.0, axis=1)
    return cell.anchor + 0.5 * cell.size * (xi + 1.0), weights


def kelly_indicator(mesh: Mesh, field: CellField) -> np.ndarray:
    """eta_K = sqrt(sum_F h_F/24 * int_F [du/dn]^2) for every leaf"""
    d = mesh.dimension
    ref = reference_element(field.order)
    sizes = mesh.leaf_sizes()
    levels = np.array([leaf.level for leaf in mesh.leaves])
    face_w = ref.tensor_weights(d - 1)

    # Normal derivatives at each leaf's own face nodes, all leaves at once
    normal = {}
    for axis in range(d):
        for side in (0, 1):
            dmat = ref.face_derivative_matrix(d, axis, side)
            normal[axis, side] = (field.values @ dmat.T) * (2.0 / sizes)[:, None]

    eta2 = np.zeros(mesh.n_leaves)
    for i, leaf in enumerate(mesh.leaves):
        h_f = face_diameter(leaf.size, d)
        for (axis, side), neighbors in mesh.face_adjacency[i].items():
            if not neighbors:
                continue
            if len(neighbors) == 1 and levels[neighbors[0]] == levels[i]:
                j = neighbors[0]
                jump = normal[axis, side][i] - normal[axis, 1 - side][j]
                weights = face_w * (0.5 * leaf.size) ** (d - 1)
                eta2[i] += KELLY_CONSTANT * h_f * np.sum(weights * np.abs(jump) ** 2)
            elif len(neighbors) == 1:
                # Coarser neighbour: integrate over this leaf's face
                j = neighbors[0]
                points, weights = _face_rule(leaf, axis, side, field.order, d)
                jump = field.gradient(mesh, i, points, axis) - field.gradient(mesh, j, points, axis)
                eta2[i] += KELLY_CONSTANT * h_f * np.sum(weights * np.abs(jump) ** 2)
            else:
                # Finer neighbours: integrate over each of their faces
                for j in neighbors:
                    points, weights = _face_rule(mesh.leaves[j], axis, 1 - side, field.order, d)
                    jump = field.gradient(mesh, i, points, axis) - field.gradient(mesh, j, points, axis)
                    eta2[i] += KELLY_CONSTANT * h_f * np.sum(weights * np.abs(jump) ** 2)
    return np.sqrt(eta2)


def _split_to_max_size(mesh: Mesh, max_size: float) -> Mesh:
    while True:
        large = [leaf.key for leaf in mesh.leaves if leaf.size > max_size * (1 + GEOMETRY_TOL)]
        if not large:
            return mesh
        mesh = mesh.refined(large, balance=False)


def refine_adapt(mesh: Mesh, target: ScalarFunction, policy: RefinementPolicy) -> Mesh:
    """Kelly-driven refinement towards the target function"""
    events = EventSystem()
    mesh = _split_to_max_size(mesh, policy.max_size)
    for n_pass in range(policy.max_passes):
        field = interpolate_cells(mesh, target, policy.order)
        eta = kelly_indicator(mesh, field)
        marks = [
            leaf.key
            for leaf, e in zip(mesh.leaves, eta)
            if e > policy.threshold and 0.5 * leaf.size >= policy.min_size * (1 - GEOMETRY_TOL)
        ]
        if not marks:
            logger.info("Refinement converged after %d pass(es): %d leaves", n_pass, mesh.n_leaves)
            break
        mesh = mesh.refined(marks, balance=True)
        if policy.max_leaves is not None and mesh.n_leaves > policy.max_leaves:
            raise BudgetExceeded(
                f"Refinement pass {n_pass + 1} produced {mesh.n_leaves} leaves "
                f"(cap {policy.max_leaves})"
            )
        logger.info(
            "Refinement pass %d: split %d, now %d leaves, max eta %.3e",
            n_pass + 1,
            len(marks),
            mesh.n_leaves,
            float(eta.max()),
        )
        events.emit(SimEvent.REFINEMENT_PASS, n_pass=n_pass + 1, split=len(marks), leaves=mesh.n_leaves)
    else:
        logger.warning("Refinement stopped at max_passes=%d", policy.max_passes)
    return mesh
