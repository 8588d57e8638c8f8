"""Power control toolkit for K-link Gaussian interference networks.

Provides scenario generation under the ITU-1411 short-range outdoor model,
the standard-interference-function framework with randomized axiom checkers,
fixed-point and primal-dual difference-of-convex solvers for weighted sum
rate maximization, an FPLinQ benchmark, and a learned (deep-unfolded)
primal-dual algorithm trained end to end with a self-contained autodiff tape.
"""

from wsropt.channel import (
    NetworkInstance,
    ScenarioConfig,
    ScenarioDataset,
    build_instance,
    generate_dataset,
    load_dataset,
    pathloss_db,
    sample_positions,
    sample_weights,
    save_dataset,
)
from wsropt.interference import (
    AxiomReport,
    InterferenceModel,
    affine_model,
    check_log_concavity_ratio,
    check_standard_axioms,
    rayleigh_model,
    yates_iterate,
)
from wsropt.solvers import (
    SolveResult,
    SolverConfig,
    ZeroDenominatorError,
    derived_map_model,
    sinr,
    solve_pda_exact,
    solve_special_case,
    stationarity_residual,
    tilde_interference,
    wsr,
    wsr_log_approx,
)
from wsropt.fplinq import FpState, fplinq_solve, fplinq_step
from wsropt.unfolding import (
    MlpParameters,
    TrainConfig,
    UnfoldingParameters,
    load_checkpoint,
    lpda_forward,
    save_checkpoint,
    train,
)

__all__ = [
    "AxiomReport",
    "FpState",
    "InterferenceModel",
    "MlpParameters",
    "NetworkInstance",
    "ScenarioConfig",
    "ScenarioDataset",
    "SolveResult",
    "SolverConfig",
    "TrainConfig",
    "UnfoldingParameters",
    "ZeroDenominatorError",
    "affine_model",
    "build_instance",
    "check_log_concavity_ratio",
    "check_standard_axioms",
    "derived_map_model",
    "fplinq_solve",
    "fplinq_step",
    "generate_dataset",
    "load_checkpoint",
    "load_dataset",
    "lpda_forward",
    "pathloss_db",
    "rayleigh_model",
    "sample_positions",
    "sample_weights",
    "save_checkpoint",
    "save_dataset",
    "sinr",
    "solve_pda_exact",
    "solve_special_case",
    "stationarity_residual",
    "tilde_interference",
    "train",
    "wsr",
    "wsr_log_approx",
    "yates_iterate",
]
