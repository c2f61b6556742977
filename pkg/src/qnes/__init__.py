"""Evolution strategies with multiplicative Hessian estimation.

The package implements two closely related black-box minimizers: a
Hessian-estimation evolution strategy (``hees``), which samples mirrored
orthogonal offspring and adapts a unit-determinant transformation of the
sampling distribution from curvature measurements, and its quasi-Newton
extension (``qnes``), which can replace the recombination mean update with a
quasi-Newton step built from a central-difference gradient estimate and a
windowed global curvature scale, switching adaptively between the two.

A benchmark suite, a run driver with IPOP restarts, CSV logging and a
progress-factor analysis for detecting superlinear convergence round out the
library; see the ``qnes`` command-line tool and the ``demos/`` scripts.
"""

from .driver import (
    BUDGET_EXHAUSTED,
    MAX_RESTARTS,
    NUMERICAL_ABORT,
    STAGNATION,
    TARGET_REACHED,
    RestartPolicy,
    StoppingCriteria,
    default_stop,
    detect_stagnation,
    ipop_run,
    run,
)
from .harness import (
    ExperimentConfig,
    cli_main,
    progress_factors,
    read_csv,
    write_csv,
)
from .hees import (
    EsState,
    Generation,
    MatrixUpdate,
    NumericalAbort,
    StrategyParams,
    csa_update,
    default_params,
    hees_iteration,
    init_state,
    matrix_update,
    rank_offspring,
    recombine_mean,
    sample_generation,
    with_pairs,
)
from .linalg import chi_mean, sample_orthogonal, sym_exp
from .objectives import (
    BENCHMARK_NAMES,
    EvalCounter,
    Objective,
    evaluate_counted,
    make_benchmark,
)
from .qn import (
    QUASI_NEWTON,
    RECOMBINATION,
    CurvatureWindow,
    StepRecord,
    SwitchState,
    estimate_gradient,
    qn_step,
    qnes_iteration,
    switch_probabilities,
    switch_update,
)
from .runlog import IterationRecord, RunLog

__version__ = "0.1.0"

__all__ = [
    "BENCHMARK_NAMES",
    "BUDGET_EXHAUSTED",
    "CurvatureWindow",
    "EsState",
    "EvalCounter",
    "ExperimentConfig",
    "Generation",
    "IterationRecord",
    "MAX_RESTARTS",
    "MatrixUpdate",
    "NUMERICAL_ABORT",
    "NumericalAbort",
    "Objective",
    "QUASI_NEWTON",
    "RECOMBINATION",
    "RestartPolicy",
    "RunLog",
    "STAGNATION",
    "StepRecord",
    "StoppingCriteria",
    "StrategyParams",
    "SwitchState",
    "TARGET_REACHED",
    "chi_mean",
    "cli_main",
    "csa_update",
    "default_params",
    "default_stop",
    "detect_stagnation",
    "estimate_gradient",
    "evaluate_counted",
    "hees_iteration",
    "init_state",
    "ipop_run",
    "make_benchmark",
    "matrix_update",
    "progress_factors",
    "qn_step",
    "qnes_iteration",
    "rank_offspring",
    "read_csv",
    "recombine_mean",
    "run",
    "sample_generation",
    "sample_orthogonal",
    "switch_probabilities",
    "switch_update",
    "sym_exp",
    "with_pairs",
    "write_csv",
]
