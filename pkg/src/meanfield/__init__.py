from meanfield.poisson import (
    PoissonSolver,
    boundary_dirichlet,
    pair_density,
    poisson_solver,
    solve_poisson,
)
from meanfield.table import Interaction, MeanFieldTable, build_table

__all__ = [
    "Interaction",
    "MeanFieldTable",
    "PoissonSolver",
    "boundary_dirichlet",
    "build_table",
    "pair_density",
    "poisson_solver",
    "solve_poisson",
]
