"""Toolkit for n-player normal-form games: seeded generators, the Nash
approximation loss, classical iterative solvers, a from-scratch neural NE
approximator, a generalization-bound evaluator, and a CLI harness.

Set NASHKIT_THREADS before importing to pin BLAS thread pools; 0 (or 1)
requests strict single-threaded numerics for bit-exact reproduction. The
variable must act before numpy first loads, which is why it is handled
here at the top of the package.
"""

import os as _os

_threads = _os.environ.get("NASHKIT_THREADS")
if _threads is not None:
    _count = "1" if _threads.strip() == "0" else _threads.strip()
    for _var in (
        "OPENBLAS_NUM_THREADS",
        "OMP_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _count)

from . import errors
from .games import (
    Game,
    GameShape,
    StrategyProfile,
    SubgradientReport,
    batch_nash_apr,
    best_response,
    brute_force_nash_apr,
    deviation_payoffs,
    expected_utility,
    l1_distance,
    max_distance,
    nash_apr,
    nash_apr_subgradient,
    nash_exploitability,
    sanitize_profile,
)
from .generators import (
    GAME_CLASSES,
    Dataset,
    GeneratorSpec,
    derive_seed,
    generate,
    load_dataset,
    load_dataset_json,
    normalize_to_unit,
    save_dataset,
    save_dataset_json,
)
from .solvers import (
    SOLVERS,
    SolverConfig,
    SolverTrace,
    export_traces,
    fictitious_play,
    project_simplex,
    regret_descent,
    regret_matching,
    replicator_dynamics,
)
from .approximator import (
    AdamState,
    ApproximatorArch,
    ApproximatorParams,
    TrainConfig,
    TrainResult,
    evaluate,
    forward_eval,
    forward_train,
    lipschitz_estimate,
    load_model,
    save_model,
    train,
)
from .bounds import BoundInputs, BoundResult, evaluate_bound
from .experiments import (
    ExperimentConfig,
    run_efficiency_race,
    run_generalization,
    run_warmstart,
)
from .selfcheck import selfcheck

__version__ = "0.1.0"
