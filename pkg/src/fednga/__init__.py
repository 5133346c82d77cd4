"""Byzantine-robust federated learning with normalized gradient aggregation.

The package simulates synchronous federated optimization where a server
combines client gradient uploads with one of six aggregation rules — a
normalizing weighted average plus five reference rules — under optional
Byzantine upload attacks, and checks the measured trajectories against
the convergence inequalities the normalizing rule satisfies.
"""

from .aggregation import (
    AGGREGATOR_TAGS,
    AggregatorKind,
    aggregate,
    coordinate_median,
    fed_nga,
    fedavg,
    geometric_median,
    krum,
    trimmed_mean,
)
from .attacks import ATTACK_TAGS, AttackKind
from .bench import BenchResult, bench_aggregator, fit_loglog_slope
from .data import (
    Dataset,
    IdxFormatError,
    QuadraticTask,
    dirichlet_partition,
    gen_quadratic_task,
    load_mnist_idx,
    select_byzantine,
    shard_weights,
)
from .models import ModelSpec, init_params, loss_and_grad, parse_model_spec
from .simulator import (
    NonFiniteError,
    RoundRecord,
    SimConfig,
    SimResult,
    TheoryParams,
    compute_gamma,
    contraction_step_check,
    gap_bounds_check,
    grad_norm_bound_check,
    lr_schedule,
    measure_theta,
    quadratic_config,
    run_simulation,
)

__version__ = "0.1.0"

__all__ = [
    "AGGREGATOR_TAGS",
    "ATTACK_TAGS",
    "AggregatorKind",
    "AttackKind",
    "BenchResult",
    "Dataset",
    "IdxFormatError",
    "ModelSpec",
    "NonFiniteError",
    "QuadraticTask",
    "RoundRecord",
    "SimConfig",
    "SimResult",
    "TheoryParams",
    "aggregate",
    "bench_aggregator",
    "compute_gamma",
    "contraction_step_check",
    "coordinate_median",
    "dirichlet_partition",
    "fed_nga",
    "fedavg",
    "fit_loglog_slope",
    "gap_bounds_check",
    "gen_quadratic_task",
    "geometric_median",
    "grad_norm_bound_check",
    "init_params",
    "krum",
    "load_mnist_idx",
    "loss_and_grad",
    "lr_schedule",
    "measure_theta",
    "parse_model_spec",
    "quadratic_config",
    "run_simulation",
    "select_byzantine",
    "shard_weights",
    "trimmed_mean",
    "__version__",
]
