import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from errors import NonDivisibleExtent

logger = logging.getLogger(__name__)

CellKey = Tuple[int, Tuple[int, ...]]

# Relative tolerance for geometric comparisons (bohr scale)
GEOMETRY_TOL = 1e-9


@dataclass(frozen=True)
class SimulationBox:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(x) for x in self.lo))
        object.__setattr__(self, "hi", tuple(float(x) for x in self.hi))
        if len(self.lo) != len(self.hi) or len(self.lo) not in (1, 2, 3):
            raise ValueError("Box corners must be d-vectors with d in {1, 2, 3}")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"Box upper corner {self.hi} must exceed lower corner {self.lo}")

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.asarray(self.lo) - tol) and np.all(p <= np.asarray(self.hi) + tol))

    def on_boundary(self, points: np.ndarray, tol: float = GEOMETRY_TOL) -> np.ndarray:
        """Mask of points lying on the box surface"""
        points = np.atleast_2d(points)
        lo = np.abs(points - np.asarray(self.lo)) <= tol
        hi = np.abs(points - np.asarray(self.hi)) <= tol
        return np.any(lo | hi, axis=1)


@dataclass
class Cell:
    level: int
    index: Tuple[int, ...]
    anchor: np.ndarray
    size: float
    children: Optional[List["Cell"]] = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def key(self) -> CellKey:
        return (self.level, self.index)

    @property
    def upper(self) -> np.ndarray:
        return self.anchor + self.size

    @property
    def center(self) -> np.ndarray:
        return self.anchor + 0.5 * self.size

    @property
    def volume(self) -> float:
        return float(self.size ** len(self.index))

    def contains(self, point: Sequence[float], tol: float = GEOMETRY_TOL) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.anchor - tol) and np.all(p <= self.upper + tol))


def parent_key(key: CellKey) -> CellKey:
    level, index = key
    return (level - 1, tuple(i // 2 for i in index))


class Mesh:
    """Forest of 2^d-trees over a box of uniform level-0 cells.

    Leaves are enumerated depth-first from the roots, so the order is
    deterministic for a given refinement history.
    """

    def __init__(self, box: SimulationBox, coarse_size: float, cells: Dict[CellKey, Cell]):
        self.box = box
        self.coarse_size = float(coarse_size)
        self.dimension = box.dimension
        self.root_counts = tuple(
            int(round(e / self.coarse_size)) for e in box.extent
        )
        self._cells = cells
        self._child_offsets = list(itertools.product((0, 1), repeat=self.dimension))
        self._face_adjacency: Optional[Dict[int, Dict[Tuple[int, int], List[int]]]] = None
        self._enumerate_leaves()

    # -- construction -------------------------------------------------

    def _enumerate_leaves(self):
        self.leaves: List[Cell] = []
        stack = list(reversed(self.root_cells))
        while stack:
            cell = stack.pop()
            if cell.is_leaf:
                self.leaves.append(cell)
            else:
                stack.extend(reversed(cell.children))
        self.leaf_index: Dict[CellKey, int] = {
            leaf.key: i for i, leaf in enumerate(self.leaves)
        }
        self._face_adjacency = None

    @property
    def root_cells(self) -> List[Cell]:
        return [
            self._cells[(0, idx)]
            for idx in itertools.product(*(range(n) for n in self.root_counts))
        ]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def max_level(self) -> int:
        return max(leaf.level for leaf in self.leaves)

    def cell(self, key: CellKey) -> Cell:
        return self._cells[key]

    def has_cell(self, key: CellKey) -> bool:
        return key in self._cells

    def _in_range(self, level: int, index: Sequence[int]) -> bool:
        scale = 2**level
        return all(0 <= i < n * scale for i, n in zip(index, self.root_counts))

    def _split(self, cell: Cell) -> None:
        if not cell.is_leaf:
            raise ValueError(f"Cell {cell.key} is already refined")
        half = 0.5 * cell.size
        children = []
        for offset in self._child_offsets:
            index = tuple(2 * i + o for i, o in zip(cell.index, offset))
            child = Cell(
                level=cell.level + 1,
                index=index,
                anchor=cell.anchor + half * np.asarray(offset, dtype=float),
                size=half,
            )
            self._cells[child.key] = child
            children.append(child)
        cell.children = children

    def _clone_cells(self) -> Dict[CellKey, Cell]:
        clones = {
            key: Cell(level=c.level, index=c.index, anchor=c.anchor.copy(), size=c.size)
            for key, c in self._cells.items()
        }
        for key, c in self._cells.items():
            if c.children is not None:
                clones[key].children = [clones[ch.key] for ch in c.children]
        return clones

    def refined(self, keys: Iterable[CellKey], balance: bool = True) -> "Mesh":
        """New mesh with the given leaves split (and 2:1 balance restored)"""
        new = Mesh(self.box, self.coarse_size, self._clone_cells())
        for key in keys:
            cell = new._cells.get(key)
            if cell is None or not cell.is_leaf:
                raise ValueError(f"Cell {key} is not a leaf of this mesh")
            new._split(cell)
        if balance:
            new._balance()
        new._enumerate_leaves()
        return new

    def _balance(self) -> None:
        """Split leaves until every pair sharing a point differs by <= 1 level"""
        offsets = [o for o in itertools.product((-1, 0, 1), repeat=self.dimension) if any(o)]
        pending = [c for c in self._cells.values() if c.is_leaf]
        while pending:
            to_split: Dict[CellKey, Cell] = {}
            for leaf in pending:
                if leaf.level < 2:
                    continue
                for off in offsets:
                    index = tuple(i + o for i, o in zip(leaf.index, off))
                    if not self._in_range(leaf.level, index):
                        continue
                    key = (leaf.level, index)
                    while key not in self._cells:
                        key = parent_key(key)
                    other = self._cells[key]
                    if other.is_leaf and other.level < leaf.level - 1:
                        to_split[key] = other
            pending = []
            for cell in to_split.values():
                if cell.is_leaf:
                    self._split(cell)
                    pending.extend(cell.children)
            if pending:
                # Neighbours of freshly split cells may now be out of balance too
                pending = [c for c in self._cells.values() if c.is_leaf]

    # -- queries ------------------------------------------------------

    def find_leaf(self, point: Sequence[float]) -> int:
        """Index of the leaf containing point (ties go to the upper cell)"""
        p = np.asarray(point, dtype=float)
        lo = np.asarray(self.box.lo)
        index = np.floor((p - lo) / self.coarse_size).astype(int)
        index = np.clip(index, 0, np.asarray(self.root_counts) - 1)
        cell = self._cells[(0, tuple(int(i) for i in index))]
        while not cell.is_leaf:
            offset = (p - cell.anchor) >= 0.5 * cell.size
            child = 0
            for o in offset:
                child = 2 * child + int(o)
            cell = cell.children[child]
        return self.leaf_index[cell.key]

    def face_neighbors(self, leaf: int, axis: int, side: int) -> List[int]:
        """Leaves across face (axis, side) of a leaf; empty on the box boundary"""
        cell = self.leaves[leaf]
        index = list(cell.index)
        index[axis] += 1 if side else -1
        if not self._in_range(cell.level, index):
            return []
        key = (cell.level, tuple(index))
        while key not in self._cells:
            key = parent_key(key)
        other = self._cells[key]
        if other.is_leaf:
            return [self.leaf_index[other.key]]
        # Finer side: collect descendants touching the shared face
        touching = 0 if side else 1
        found = []
        stack = [other]
        while stack:
            c = stack.pop()
            if c.is_leaf:
                found.append(self.leaf_index[c.key])
                continue
            for offset, child in zip(self._child_offsets, c.children):
                if offset[axis] == touching:
                    stack.append(child)
        return sorted(found)

    @property
    def face_adjacency(self) -> Dict[int, Dict[Tuple[int, int], List[int]]]:
        """leaf -> {(axis, side): neighbouring leaves}"""
        if self._face_adjacency is None:
            self._face_adjacency = {
                i: {
                    (axis, side): self.face_neighbors(i, axis, side)
                    for axis in range(self.dimension)
                    for side in (0, 1)
                }
                for i in range(self.n_leaves)
            }
        return self._face_adjacency

    def is_balanced(self) -> bool:
        for i, leaf in enumerate(self.leaves):
            for neighbors in self.face_adjacency[i].values():
                for j in neighbors:
                    if abs(self.leaves[j].level - leaf.level) > 1:
                        return False
        return True

    def leaf_sizes(self) -> np.ndarray:
        return np.array([leaf.size for leaf in self.leaves])

    def distinct_sizes(self) -> List[float]:
        return sorted(set(float(s) for s in self.leaf_sizes()), reverse=True)

    def leaf_volume(self) -> float:
        return float(np.sum(self.leaf_sizes() ** self.dimension))

    def anchors(self) -> np.ndarray:
        return np.array([leaf.anchor for leaf in self.leaves])

    def leaves_touching(self, point: Sequence[float], tol: float = GEOMETRY_TOL) -> Set[int]:
        return {i for i, leaf in enumerate(self.leaves) if leaf.contains(point, tol)}

    def same_as(self, other: "Mesh") -> bool:
        return (
            self.box == other.box
            and self.coarse_size == other.coarse_size
            and [leaf.key for leaf in self.leaves] == [leaf.key for leaf in other.leaves]
        )


def build_uniform(box: SimulationBox, coarse_size: float) -> Mesh:
    """Tile the box with level-0 cells of the given size"""
    if coarse_size <= 0:
        raise ValueError("Coarse cell size must be positive")
    counts = box.extent / coarse_size
    rounded = np.round(counts)
    if np.any(np.abs(counts - rounded) > GEOMETRY_TOL * np.maximum(1.0, counts)) or np.any(rounded < 1):
        raise NonDivisibleExtent(
            f"Box extents {tuple(box.extent)} are not multiples of coarse size {coarse_size}"
        )
    lo = np.asarray(box.lo)
    cells: Dict[CellKey, Cell] = {}
    for index in itertools.product(*(range(int(n)) for n in rounded)):
        cell = Cell(
            level=0,
            index=tuple(index),
            anchor=lo + coarse_size * np.asarray(index, dtype=float),
            size=float(coarse_size),
        )
        cells[cell.key] = cell
    mesh = Mesh(box, coarse_size, cells)
    logger.debug("Uniform mesh: %d leaves of size %g", mesh.n_leaves, coarse_size)
    return mesh
