from .program import (
    Affine,
    ConeBlock,
    ConicProgram,
    ResidualReport,
    check_solution,
    dump_program,
    lin_comb,
    load_program,
)
from .solvers import SOLVERS, SolveResult, Tolerances, feasibility_verdict, solve, solve_robustly

__all__ = [
    "Affine",
    "ConeBlock",
    "ConicProgram",
    "ResidualReport",
    "SOLVERS",
    "SolveResult",
    "Tolerances",
    "check_solution",
    "dump_program",
    "feasibility_verdict",
    "lin_comb",
    "load_program",
    "solve",
    "solve_robustly",
]
