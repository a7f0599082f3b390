"""Transmit-power minimization for IRS-assisted NOMA downlinks.

Joint optimization of base-station beamformers, per-cluster power-allocation
coefficients and IRS phase shifts via semidefinite relaxation and successive
convex approximation, solved with the in-repo conic interior-point solver.
"""

from .model import (
    SystemConfig,
    ChannelSet,
    RateReport,
    generate_channels,
    noise_power,
    effective_edge_channel,
    sinr_edge,
    sinr_center_decoding_edge,
    sinr_center,
    evaluate_solution,
    total_power,
)
from .conic import ConeProgram, SolverResult, solve, check_kkt
from .beamforming import (
    FixedPoints,
    BeamformingSolution,
    InitSearchTrace,
    sinr_threshold,
    build_p2,
    build_p3,
    update_fixed_points,
    find_initial_points,
    optimize_beamforming,
)
from .phase import (
    PhaseSolution,
    lift_edge_operators,
    build_p5,
    solve_phase_feasibility,
)
from .randomization import (
    RandomizationReport,
    randomize_beamformers,
    randomize_phases,
)
from .orchestration import (
    FullSolution,
    AlgorithmTrace,
    run_alternating,
    run_partial_exhaustive,
    random_phase_baseline,
    oma_baseline,
    build_p6,
    build_p7,
    complexity_estimate,
    verify_full_solution,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
