"""SVD-split low-rank adaptation with orthonormal regularization.

A desk-scale numerical toolkit: deterministic dense linear algebra, four
linear-layer adapter parameterizations (SVD-split, LoRA, PiSSA, full
update), a two-rate gradient-descent loop, and an analysis suite that
measures spectral drift, condition-number trajectories, paired one-step
perturbation bounds, and empirical convergence rates.
"""

__version__ = "0.1.0"

from .adapters import (
    FullAdapter,
    LoraAdapter,
    PissaAdapter,
    SorsaAdapter,
    effective_weight,
    factor_gradients,
    forward,
    init_full,
    init_lora,
    init_pissa,
    init_sorsa,
    load_adapter,
    save_adapter,
    trainable_parameter_count,
)
from .analysis import (
    ConditionTrace,
    ConvergenceReport,
    DriftReport,
    TwinResult,
    WeylCheck,
    delta_d,
    delta_sigma,
    drift_report,
    estimate_constants,
    twin_run,
    weyl_probe,
)
from .linalg import (
    SvdResult,
    condition_number,
    frobenius_norm,
    load_matrix_csv,
    matrix,
    save_matrix_csv,
    spectral_norm,
    svd,
    truncate,
)
from .optimizer import MetricsTrace, StepRecord, TrainConfig, schedule, sorsa_step, train
from .regularizer import RegEval, evaluate, lipschitz_certificate, reg_grad, reg_loss
from .tasks import Task, TaskSpec, make_task

__all__ = [name for name in dir() if not name.startswith("_")]
