"""Optimal measurement-feedback control of an optomechanical oscillator.

Computes conditional (filtered) and unconditional (feedback-driven) steady
states of a continuously measured cavity-optomechanical system, for
cooling and squeezing objectives, with solver-independent oracles and a
sweep CLI.
"""

__version__ = "0.1.0"

from .model import (
    DerivedQuantities,
    DissipationModel,
    ModelMatrices,
    PhysicalParams,
    adiabatic_reduce,
    build_matrices,
    derived_quantities,
    probe_amplitude,
    thermal_occupation,
)
from .solvers import (
    NoStabilizingSolutionError,
    NonConvergenceError,
    SingularBasisError,
    SolveMethod,
    SolveReport,
    SolverError,
    UnstableDriftError,
    closed_loop_spectrum,
    integrate_filter_ode,
    filter_residual,
    solve_control_are,
    solve_filter_are,
    solve_lyapunov,
)
from .control import (
    CostKind,
    CostSpec,
    LqgSolution,
    UnstableClosedLoopError,
    asymptotic_excess_cooling,
    asymptotic_excess_squeezing,
    asymptotic_gain_rwa,
    cooling_spec,
    cost_matrices,
    excess_convergence,
    feedback_strength,
    mech_light_correlation,
    squeezing_spec,
    synthesize,
)
from .observables import (
    MechanicalBlock,
    PhysicalityResult,
    SqueezingResult,
    check_physicality,
    min_quadrature_variance,
    phonon_number,
    purity,
    rotated_variance,
    symplectic_form,
)
from .trajectory import (
    InsufficientSamplesError,
    StepSizeError,
    TrajectoryConfig,
    TrajectoryRecord,
    auto_config,
    ensemble_excess_covariance,
    load_records,
    photocurrent_increment,
    save_records,
    simulate_conditional_mean,
    simulate_ensemble,
)
from .sweep import (
    Objective,
    OptimizeResult,
    ResultRow,
    SweepConfig,
    evaluate_sweep_point,
    optimize_angle,
    optimize_coupling,
    read_rows,
    run_point,
    run_sweep,
    write_rows,
)
