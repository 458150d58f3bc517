# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from . import instrumentation
from ._cli import cli
from ._config import is_testing, set_testing
from ._errors import (
    AvgOptError,
    ConfigError,
    DivergenceError,
    InvalidHierarchyError,
    InvalidMdpError,
    NotUnichainError,
    SingularSystemError,
)
from ._exact import (
    Advantage,
    AugmentedKernel,
    StationaryDistribution,
    TrapReport,
    ValueTables,
    average_reward,
    discounted_values,
    initial_distribution,
    k_step_kernel,
    one_step_kernel,
    relative_value_iteration,
    solve_values,
    stationary_distribution,
    trap_analysis,
    values_to_json,
)
from ._gradient import (
    GradcheckReport,
    GradientVector,
    finite_difference_gradient,
    flat_policy_gradient,
    gradcheck_report,
    theorem1_gradient,
)
from ._harness import (
    AggregateCurve,
    ExperimentConfig,
    ExperimentResult,
    load_config,
    run_experiment,
    run_sweep,
    trace_report,
)
from ._hierarchy import (
    ActorParams,
    FeatureMap,
    HierarchySpec,
    LogGradFeatures,
    log_grad,
    next_option_distribution,
    params_from_json,
    params_to_json,
    policy_prob,
    sample_arrival,
    termination_prob,
)
from ._learner import (
    CriticState,
    LearnerConfig,
    RunRecord,
    StackPair,
    StepSchedule,
    UpdateDirection,
    actor_step,
    critic_step,
    td_error,
    train,
    update_direction,
)
from ._mdp import (
    DeliveryGridSpec,
    TabularMdp,
    Transition,
    TrapChainSpec,
    build_delivery_grid,
    build_trap_chain,
    env_step,
    mdp_from_json,
    mdp_to_json,
)


__all__ = [
    "ActorParams",
    "Advantage",
    "AggregateCurve",
    "AugmentedKernel",
    "AvgOptError",
    "ConfigError",
    "CriticState",
    "DeliveryGridSpec",
    "DivergenceError",
    "ExperimentConfig",
    "ExperimentResult",
    "FeatureMap",
    "GradcheckReport",
    "GradientVector",
    "HierarchySpec",
    "InvalidHierarchyError",
    "InvalidMdpError",
    "LearnerConfig",
    "LogGradFeatures",
    "NotUnichainError",
    "RunRecord",
    "SingularSystemError",
    "StackPair",
    "StationaryDistribution",
    "StepSchedule",
    "TabularMdp",
    "Transition",
    "TrapChainSpec",
    "TrapReport",
    "UpdateDirection",
    "ValueTables",
    "actor_step",
    "average_reward",
    "build_delivery_grid",
    "build_trap_chain",
    "cli",
    "critic_step",
    "discounted_values",
    "env_step",
    "finite_difference_gradient",
    "flat_policy_gradient",
    "gradcheck_report",
    "initial_distribution",
    "instrumentation",
    "is_testing",
    "k_step_kernel",
    "load_config",
    "log_grad",
    "mdp_from_json",
    "mdp_to_json",
    "next_option_distribution",
    "one_step_kernel",
    "params_from_json",
    "params_to_json",
    "policy_prob",
    "relative_value_iteration",
    "run_experiment",
    "run_sweep",
    "sample_arrival",
    "set_testing",
    "solve_values",
    "stationary_distribution",
    "td_error",
    "termination_prob",
    "theorem1_gradient",
    "trace_report",
    "train",
    "trap_analysis",
    "update_direction",
    "values_to_json",
]


def __getattr__(name: str) -> str:
    if name != "__version__":
        msg = f"module {__name__} has no attribute {name}"
        raise AttributeError(msg)

    from importlib.metadata import version

    return version("avgopt")
