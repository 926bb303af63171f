import logging
from typing import Optional, Sequence

import meshio
import numpy as np

from grid.cell_region import CellRegion
from grid.mesh import Mesh

logger = logging.getLogger(__name__)

# meshio cell type and VTK corner order per dimension
VTK_CELLS = {
    1: ("line", [(0,), (1,)]),
    2: ("quad", [(0, 0), (1, 0), (1, 1), (0, 1)]),
    3: (
        "hexahedron",
        [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
    ),
}


def dump_text(mesh: Mesh, path: str) -> None:
    """One line per leaf: level anchor... size"""
    with open(path, "w") as f:
        axes = " ".join(f"anchor_{a}" for a in "xyz"[: mesh.dimension])
        f.write(f"# level {axes} size  (bohr)\n")
        for leaf in mesh.leaves:
            anchor = " ".join(f"{x:.10g}" for x in leaf.anchor)
            f.write(f"{leaf.level} {anchor} {leaf.size:.10g}\n")
    logger.info("Wrote %d leaves to %s", mesh.n_leaves, path)


def load_text(path: str) -> np.ndarray:
    """Rows of (level, anchor..., size) from a dump"""
    return np.atleast_2d(np.loadtxt(path, comments="#"))


def export_vtk(mesh: Mesh, path: str, regions: Optional[Sequence[CellRegion]] = None) -> None:
    """Legacy VTK unstructured grid of the leaves with level (and region) cell data"""
    cell_type, corners = VTK_CELLS[mesh.dimension]
    corners = np.asarray(corners, dtype=float)

    point_ids = {}
    points = []
    connectivity = []
    for leaf in mesh.leaves:
        ids = []
        for corner in corners:
            x = leaf.anchor + leaf.size * corner
            key = tuple(np.round(x * 1e9).astype(np.int64))
            if key not in point_ids:
                point_ids[key] = len(points)
                points.append(np.pad(x, (0, 3 - mesh.dimension)))
            ids.append(point_ids[key])
        connectivity.append(ids)

    cell_data = {"level": [np.array([leaf.level for leaf in mesh.leaves], dtype=np.int32)]}
    if regions is not None:
        cell_data["region"] = [np.array([r.code for r in regions], dtype=np.int32)]

    vtk_mesh = meshio.Mesh(
        np.array(points),
        [(cell_type, np.array(connectivity, dtype=np.int64))],
        cell_data=cell_data,
    )
    vtk_mesh.write(path, file_format="vtk", binary=False)
    logger.info("Wrote VTK mesh (%d points, %d cells) to %s", len(points), mesh.n_leaves, path)
