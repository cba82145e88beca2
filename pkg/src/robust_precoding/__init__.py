"""Robust linear and Tomlinson-Harashima downlink precoding with MSE guarantees."""
from .embed import embed_matrix, embed_row, unembed_matrix
from .metrics import Design, QoSTargets, mse, sinr, sinr_floor_from_mse
from .uncertainty import (
    Ellipsoid,
    UncertaintyRegion,
    make_interval,
    make_spherical,
    worst_case_mse,
)
from .formulations import (
    ProblemData,
    build_perfect_csi,
    build_robust_conservative,
    build_robust_exact,
)
from .design import (
    BisectionConfig,
    DesignOutcome,
    order_blast,
    order_weighted,
    solve_max_delta,
    solve_minimax,
    solve_power_min,
)
from .thp import ConstellationSpec, SimulationReport, modulo, simulate, thp_precode
from .experiments import ExperimentConfig

__version__ = "0.1.0"
