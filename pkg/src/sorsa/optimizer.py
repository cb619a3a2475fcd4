"""Gradient-descent training loop with a single schedule for two rates.

The update follows the one-optimizer form: the task gradient and
(gamma / eta_max) times the regularizer gradient are summed, optionally
clipped as one block, and applied with the scheduled step size eta_t.
This is identical to running separate rates (eta_t, gamma_t) with
gamma_t = eta_t * gamma / eta_max.  With gamma = 0 the step is plain
gradient descent on the task loss, bit for bit.

The theory this artifact checks is stated for deterministic gradient
descent, so there are no optimizer moments here; the warmup + cosine
schedule shape is kept, plus a constant schedule for fixed-step-size
convergence experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adapters import (
    Adapter,
    FullAdapter,
    LoraAdapter,
    PissaAdapter,
    SorsaAdapter,
    effective_weight,
    factor_gradients,
)
from .linalg import NonFiniteError, check_matrix, format_value
from .regularizer import reg_grad, reg_loss

SCHEDULES = ("warmup_cosine", "constant")


class DivergenceError(RuntimeError):
    """Raised when the training loss explodes past the divergence guard."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Defaults for eta_max, gamma, warmup_ratio, and grad_clip follow the
    reference training recipe; desk-scale experiments override eta_max
    (a peak rate tuned for full-batch gradient descent on small matrices).
    """

    eta_max: float = 3e-5
    gamma: float = 4e-4
    warmup_ratio: float = 0.03
    total_steps: int = 500
    grad_clip: float | None = 1.0
    seed: int = 0
    rank: int = 4
    schedule: str = "warmup_cosine"

    def __post_init__(self):
        if self.eta_max <= 0:
            raise ValueError("eta_max must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not 0 <= self.warmup_ratio < 1:
            raise ValueError("warmup_ratio must lie in [0, 1)")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


@dataclass(frozen=True)
class StepRecord:
    step: int
    train_loss: float
    reg_loss: float
    grad_norm: float
    eta_t: float


@dataclass
class MetricsTrace:
    """Per-step records plus strided effective-weight snapshots."""

    records: list[StepRecord] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["step,train_loss,reg_loss,grad_norm,eta_t"]
        for rec in self.records:
            lines.append(
                ",".join(
                    (
                        str(rec.step),
                        format_value(rec.train_loss),
                        format_value(rec.reg_loss),
                        format_value(rec.grad_norm),
                        format_value(rec.eta_t),
                    )
                )
            )
        return "\n".join(lines) + "\n"


def schedule(cfg: TrainConfig, t: int) -> float:
    """Step size at step t: linear warmup to eta_max, then cosine decay.

    Positive for every 0 <= t < total_steps; the first warmup step uses
    eta_max / warmup_steps rather than zero so no step is a no-op.
    """
    if not 0 <= t < cfg.total_steps:
        raise ValueError(f"step index {t} outside [0, {cfg.total_steps})")
    if cfg.schedule == "constant":
        return cfg.eta_max
    warm = math.ceil(cfg.warmup_ratio * cfg.total_steps)
    if t < warm:
        return cfg.eta_max * (t + 1) / warm
    span = cfg.total_steps - warm
    return cfg.eta_max * 0.5 * (1.0 + math.cos(math.pi * (t - warm) / span))


def _check_gradient(g: np.ndarray, what: str) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(g).all():
        raise NonFiniteError(f"{what} contains non-finite entries; aborting step")
    return g


def _clip_scale(cfg: TrainConfig, norm: float) -> float:
    if cfg.grad_clip is not None and norm > cfg.grad_clip:
        return cfg.grad_clip / norm
    return 1.0


def sorsa_step(
    adapter: SorsaAdapter,
    g_train_w: np.ndarray,
    cfg: TrainConfig,
    t: int,
    train_loss: float = math.nan,
) -> StepRecord:
    """Apply one combined-rate update to the three trainable factors.

    g_train_w is the task-loss gradient with respect to the principal
    weight (equivalently the merged weight, since w_r is constant).  The
    residual w_r is never touched.
    """
    g_w = _check_gradient(check_matrix(g_train_w, "g_train_w"), "task gradient")
    g_u, g_s, g_v = factor_gradients(adapter, g_w)
    penalty = reg_loss(adapter.u_p, adapter.v_p)
    if cfg.gamma != 0.0:
        ratio = cfg.gamma / cfg.eta_max
        r_u, r_v = reg_grad(adapter.u_p, adapter.v_p)
        g_u = g_u + ratio * r_u
        g_v = g_v + ratio * r_v
    grad_norm = math.sqrt(
        float(np.sum(g_u * g_u) + np.sum(g_s * g_s) + np.sum(g_v * g_v))
    )
    _check_gradient(np.array([grad_norm]), "combined gradient")
    scale = _clip_scale(cfg, grad_norm)
    eta = schedule(cfg, t)
    adapter.u_p -= (eta * scale) * g_u
    adapter.s_p -= (eta * scale) * g_s
    adapter.v_p -= (eta * scale) * g_v
    return StepRecord(t, float(train_loss), penalty, grad_norm, eta)


def _two_factor_step(a_grad, b_grad, adapter, cfg, t, train_loss):
    grad_norm = math.sqrt(float(np.sum(a_grad * a_grad) + np.sum(b_grad * b_grad)))
    scale = _clip_scale(cfg, grad_norm)
    eta = schedule(cfg, t)
    adapter.a -= (eta * scale) * a_grad
    adapter.b -= (eta * scale) * b_grad
    return StepRecord(t, float(train_loss), math.nan, grad_norm, eta)


def apply_step(
    adapter: Adapter,
    g_train_w: np.ndarray,
    cfg: TrainConfig,
    t: int,
    train_loss: float = math.nan,
) -> StepRecord:
    """One gradient-descent step for any adapter type (in place)."""
    if isinstance(adapter, SorsaAdapter):
        return sorsa_step(adapter, g_train_w, cfg, t, train_loss)
    g_w = _check_gradient(check_matrix(g_train_w, "g_train_w"), "task gradient")
    if isinstance(adapter, LoraAdapter):
        return _two_factor_step(adapter.b.T @ g_w, g_w @ adapter.a.T, adapter, cfg, t, train_loss)
    if isinstance(adapter, PissaAdapter):
        return _two_factor_step(g_w @ adapter.b.T, adapter.a.T @ g_w, adapter, cfg, t, train_loss)
    grad_norm = math.sqrt(float(np.sum(g_w * g_w)))
    scale = _clip_scale(cfg, grad_norm)
    eta = schedule(cfg, t)
    adapter.w -= (eta * scale) * g_w
    return StepRecord(t, float(train_loss), math.nan, grad_norm, eta)


def train(
    adapter: Adapter,
    task,
    cfg: TrainConfig,
    snapshot_stride: int | None = None,
    observer=None,
) -> MetricsTrace:
    """Run total_steps updates, recording one StepRecord per step.

    Snapshots hold copies of the effective weight at the start of every
    snapshot_stride-th step plus the final state.  Aborts with
    DivergenceError if the loss exceeds 1e6 times its initial value.
    """
    trace = MetricsTrace()
    if cfg.total_steps == 0:
        return trace
    initial_loss = float(task.loss(effective_weight(adapter)))
    guard = 1e6 * max(initial_loss, 1e-12)
    for t in range(cfg.total_steps):
        w_eff = effective_weight(adapter)
        loss = float(task.loss(w_eff))
        if not math.isfinite(loss) or loss > guard:
            raise DivergenceError(
                f"loss {loss:.6g} at step {t} exceeds 1e6 x initial ({initial_loss:.6g})"
            )
        if snapshot_stride is not None and t % snapshot_stride == 0:
            trace.snapshots.append((t, w_eff.copy()))
        record = apply_step(adapter, task.grad(w_eff), cfg, t, train_loss=loss)
        trace.records.append(record)
        if observer is not None:
            observer(t, adapter, record)
    if snapshot_stride is not None:
        trace.snapshots.append((cfg.total_steps, effective_weight(adapter)))
    return trace
