import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from errors import EcsMisaligned
from fem.quadrature import ReferenceElement, reference_element
from grid.cell_region import CellRegion
from grid.mesh import GEOMETRY_TOL, Mesh, parent_key
from grid.refinement import CellField

logger = logging.getLogger(__name__)

# Node coordinates are matched on a 1e-9 bohr lattice
NODE_KEY_SCALE = 1e9
CONSTRAINT_DROP_TOL = 1e-12


@dataclass(frozen=True)
class EcsConfig:
    r0: Tuple[float, ...]
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "r0", tuple(float(r) for r in self.r0))
        if not 0.0 <= self.theta < 0.5 * np.pi:
            raise ValueError(f"ECS angle must lie in [0, pi/2), got {self.theta}")
        if any(r <= 0 for r in self.r0):
            raise ValueError("ECS half-widths must be positive")

    @property
    def factor(self) -> complex:
        return complex(np.exp(1j * self.theta))

    def stretch(self, x: np.ndarray) -> np.ndarray:
        """Complex coordinates x -> R0 + e^{i theta}(x - R0) outside +-R0"""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r0 = np.asarray(self.r0)
        excess = np.abs(x) - r0
        scaled = np.sign(x) * (r0 + self.factor * excess)
        return np.where(excess > 0, scaled, x + 0j)


@dataclass
class Constraint:
    slave: int
    masters: np.ndarray
    coefficients: np.ndarray


class FeSpace:
    """Continuous Gauss-Lobatto Lagrange space on the leaves of a mesh.

    Global nodes are the union of all leaf nodes. Slave nodes (hanging on a
    coarser neighbour) are tied to masters by constraints; boundary masters
    carry the zero Dirichlet condition. Coefficient vectors used for orbitals
    live on the free dofs (interior masters).
    """

    def __init__(self, mesh: Mesh, order: int, ecs: Optional[EcsConfig] = None):
        self.mesh = mesh
        self.order = order
        self.dimension = mesh.dimension
        self.reference: ReferenceElement = reference_element(order)
        self.ecs = ecs

        self._build_nodes()
        self._build_constraints()
        self._build_ecs_tags()
        self._prolongations: Dict[bool, sp.csr_matrix] = {}

    # -- construction -------------------------------------------------

    def _build_nodes(self):
        mesh, ref, d = self.mesh, self.reference, self.dimension
        xi = ref.tensor_points(d)
        w_ref = ref.tensor_weights(d)
        anchors = mesh.anchors()
        sizes = mesh.leaf_sizes()

        self.cell_nodes = anchors[:, None, :] + 0.5 * sizes[:, None, None] * (xi[None] + 1.0)
        self.cell_weights = w_ref[None, :] * (0.5 * sizes[:, None]) ** d
        self.local_on_face = np.any(np.abs(np.abs(xi) - 1.0) < 1e-14, axis=1)

        keys = np.round(self.cell_nodes * NODE_KEY_SCALE).astype(np.int64)
        node_ids: Dict[Tuple[int, ...], int] = {}
        dof_map = np.empty(keys.shape[:2], dtype=np.int64)
        coords: List[np.ndarray] = []
        owners: List[List[int]] = []
        for leaf in range(mesh.n_leaves):
            for local, key in enumerate(map(tuple, keys[leaf])):
                gid = node_ids.get(key)
                if gid is None:
                    gid = len(coords)
                    node_ids[key] = gid
                    coords.append(self.cell_nodes[leaf, local])
                    owners.append([])
                dof_map[leaf, local] = gid
                owners[gid].append(leaf)

        self.dof_map = dof_map
        self.node_coords = np.array(coords)
        self.node_owners = owners
        self.n_dofs = len(coords)
        self.node_weights = np.bincount(
            dof_map.ravel(), weights=self.cell_weights.ravel(), minlength=self.n_dofs
        )
        self.boundary_mask = mesh.box.on_boundary(self.node_coords)
        self.boundary_dofs = np.flatnonzero(self.boundary_mask)

    def _leaves_with_coarser_neighbor(self) -> np.ndarray:
        mesh = self.mesh
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=self.dimension) if any(o)]
        flags = np.zeros(mesh.n_leaves, dtype=bool)
        for i, leaf in enumerate(mesh.leaves):
            if leaf.level == 0:
                continue
            for off in offsets:
                index = tuple(a + o for a, o in zip(leaf.index, off))
                if not mesh._in_range(leaf.level, index):
                    continue
                key = (leaf.level, index)
                while not mesh.has_cell(key):
                    key = parent_key(key)
                if key[0] < leaf.level:
                    flags[i] = True
                    break
        return flags

    def _build_constraints(self):
        mesh, ref = self.mesh, self.reference
        self.constraints: Dict[int, Constraint] = {}
        levels = np.array([leaf.level for leaf in mesh.leaves])
        if levels.min() == levels.max():
            self._finish_dof_sets()
            return

        candidates = set()
        for leaf in np.flatnonzero(self._leaves_with_coarser_neighbor()):
            candidates.update(self.dof_map[leaf, self.local_on_face].tolist())

        delta = 1e-6 * float(mesh.leaf_sizes().min())
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dimension)))
        for gid in sorted(candidates):
            x = self.node_coords[gid]
            owners = set(self.node_owners[gid])
            owner_level = min(levels[o] for o in owners)
            for s in signs:
                nearby = x + delta * s
                if not mesh.box.contains(nearby):
                    continue
                j = mesh.find_leaf(nearby)
                if j in owners or levels[j] >= owner_level:
                    continue
                cell = mesh.leaves[j]
                xi = 2.0 * (x - cell.anchor) / cell.size - 1.0
                coeffs = ref.evaluate(xi[None, :])[0]
                keep = np.abs(coeffs) > CONSTRAINT_DROP_TOL
                self.constraints[gid] = Constraint(
                    slave=gid, masters=self.dof_map[j, keep].copy(), coefficients=coeffs[keep]
                )
                break

        self._resolve_chains()
        self._finish_dof_sets()
        logger.debug("%d hanging-node constraints", len(self.constraints))

    def _resolve_chains(self):
        for _ in range(8):
            changed = False
            for c in self.constraints.values():
                if not any(m in self.constraints for m in c.masters):
                    continue
                merged: Dict[int, float] = {}
                for m, a in zip(c.masters, c.coefficients):
                    inner = self.constraints.get(int(m))
                    if inner is None:
                        merged[int(m)] = merged.get(int(m), 0.0) + a
                    else:
                        for mm, aa in zip(inner.masters, inner.coefficients):
                            merged[int(mm)] = merged.get(int(mm), 0.0) + a * aa
                c.masters = np.array(list(merged.keys()), dtype=np.int64)
                c.coefficients = np.array(list(merged.values()))
                changed = True
            if not changed:
                return
        raise ValueError("Hanging-node constraints form a cycle")

    def _finish_dof_sets(self):
        slave = np.zeros(self.n_dofs, dtype=bool)
        slave[list(self.constraints.keys())] = True
        self.slave_mask = slave
        self.master_dofs = np.flatnonzero(~slave)
        self.free_dofs = np.flatnonzero(~slave & ~self.boundary_mask)
        self.n_master = len(self.master_dofs)
        self.n_free = len(self.free_dofs)

    def _build_ecs_tags(self):
        mesh, d = self.mesh, self.dimension
        self.ecs_tag = np.zeros((mesh.n_leaves, d), dtype=bool)
        if self.ecs is not None:
            if len(self.ecs.r0) != d:
                raise EcsMisaligned(f"ECS half-widths {self.ecs.r0} do not match dimension {d}")
            r0 = np.asarray(self.ecs.r0)
            lo, hi = np.asarray(mesh.box.lo), np.asarray(mesh.box.hi)
            tol = GEOMETRY_TOL
            if np.any(r0 >= hi - tol) or np.any(-r0 <= lo + tol):
                raise EcsMisaligned("ECS surfaces must lie strictly inside the box")
            for i, leaf in enumerate(mesh.leaves):
                a, b = leaf.anchor, leaf.upper
                for axis in range(d):
                    for surface in (-r0[axis], r0[axis]):
                        if a[axis] + tol < surface < b[axis] - tol:
                            raise EcsMisaligned(
                                f"ECS surface x_{axis}={surface} cuts leaf {leaf.key}"
                            )
                    self.ecs_tag[i, axis] = (a[axis] >= r0[axis] - tol) or (b[axis] <= -r0[axis] + tol)

        touches = np.array(
            [
                np.any(np.isclose(leaf.anchor, mesh.box.lo)) or np.any(np.isclose(leaf.upper, mesh.box.hi))
                for leaf in mesh.leaves
            ]
        )
        self.wall_leaves = np.flatnonzero(touches)
        self.regions: List[CellRegion] = [
            CellRegion.ABSORBING if self.ecs_tag[i].any() else
            CellRegion.BOUNDARY if touches[i] else CellRegion.INTERIOR
            for i in range(mesh.n_leaves)
        ]

    # -- maps between representations ---------------------------------

    def prolongation(self, boundary: bool = False) -> sp.csr_matrix:
        """Sparse map from free (or all master) coefficients to all global nodes"""
        if boundary not in self._prolongations:
            columns = self.master_dofs if boundary else self.free_dofs
            col_of = -np.ones(self.n_dofs, dtype=np.int64)
            col_of[columns] = np.arange(len(columns))
            rows = list(columns)
            cols = list(range(len(columns)))
            vals = [1.0] * len(columns)
            for c in self.constraints.values():
                for m, a in zip(c.masters, c.coefficients):
                    if col_of[m] >= 0:
                        rows.append(c.slave)
                        cols.append(col_of[m])
                        vals.append(a)
            self._prolongations[boundary] = sp.csr_matrix(
                (vals, (rows, cols)), shape=(self.n_dofs, len(columns))
            )
        return self._prolongations[boundary]

    def n_coefficients(self, boundary: bool = False) -> int:
        return self.n_master if boundary else self.n_free

    def nodal(self, c: np.ndarray, boundary: bool = False) -> np.ndarray:
        """Values at all global nodes; c may be [n] or [k, n]"""
        P = self.prolongation(boundary)
        c = np.asarray(c)
        if c.ndim == 1:
            return P @ c
        return (P @ c.T).T

    def restrict(self, nodal_load: np.ndarray, boundary: bool = False) -> np.ndarray:
        """Transpose of nodal: gathers node-based loads onto coefficients"""
        P = self.prolongation(boundary)
        nodal_load = np.asarray(nodal_load)
        if nodal_load.ndim == 1:
            return P.T @ nodal_load
        return (P.T @ nodal_load.T).T

    def cell_values(self, c: np.ndarray, boundary: bool = False) -> CellField:
        return CellField(order=self.order, values=self.nodal(c, boundary)[self.dof_map])

    def interpolate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Nodal values of f at all global nodes"""
        return np.asarray(f(self.node_coords))

    def evaluate(self, c: np.ndarray, points: np.ndarray, boundary: bool = False) -> np.ndarray:
        """Reconstruct the expansion at arbitrary physical points"""
        values = self.nodal(c, boundary)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(points), dtype=values.dtype)
        for n, x in enumerate(points):
            leaf = self.mesh.find_leaf(x)
            cell = self.mesh.leaves[leaf]
            xi = 2.0 * (x - cell.anchor) / cell.size - 1.0
            out[n] = self.reference.evaluate(xi[None, :])[0] @ values[self.dof_map[leaf]]
        return out

    # -- exterior complex scaling --------------------------------------

    def cell_scale_factors(self) -> np.ndarray:
        """Per-leaf, per-axis Jacobian factor (e^{i theta} in scaled cells, else 1)"""
        factors = np.ones((self.mesh.n_leaves, self.dimension), dtype=complex)
        if self.ecs is not None:
            factors[self.ecs_tag] = self.ecs.factor
        return factors

    def complex_cell_nodes(self) -> np.ndarray:
        if self.ecs is None:
            return self.cell_nodes.astype(complex)
        flat = self.cell_nodes.reshape(-1, self.dimension)
        return self.ecs.stretch(flat).reshape(self.cell_nodes.shape)

    def node_scale_ratio(self) -> np.ndarray:
        """Complex-to-real quadrature weight ratio at every global node"""
        if self.ecs is None or not self.ecs_tag.any():
            return np.ones(self.n_dofs, dtype=complex)
        volume = np.prod(self.cell_scale_factors(), axis=1)
        cw = self.cell_weights * volume[:, None]
        re = np.bincount(self.dof_map.ravel(), weights=cw.real.ravel(), minlength=self.n_dofs)
        im = np.bincount(self.dof_map.ravel(), weights=cw.imag.ravel(), minlength=self.n_dofs)
        return (re + 1j * im) / self.node_weights

    def interior_free_dofs(self) -> np.ndarray:
        """Positions (in free numbering) of dofs touching no scaled cell"""
        touched = np.zeros(self.n_dofs, dtype=bool)
        scaled = np.flatnonzero(self.ecs_tag.any(axis=1))
        if len(scaled):
            touched[np.unique(self.dof_map[scaled])] = True
        return np.flatnonzero(~touched[self.free_dofs])


def build_space(mesh: Mesh, order: int, ecs: Optional[EcsConfig] = None) -> FeSpace:
    """Global continuous Gauss-Lobatto basis on the mesh leaves"""
    space = FeSpace(mesh, order, ecs)
    logger.info(
        "FE space: order %d, %d nodes, %d free dofs, %d constraints, %d absorbing cells",
        order,
        space.n_dofs,
        space.n_free,
        len(space.constraints),
        int(space.ecs_tag.any(axis=1).sum()),
    )
    return space
