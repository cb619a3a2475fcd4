"""Measurement machinery: spectral drift, condition-number traces, paired
one-step perturbation checks, and empirical convergence constants.

All SVDs here run in full float64 on the exact parameter values.  Drift is
measured between the pre-trained weight and the merged weight at step t:
delta_sigma is the mean absolute change of the sorted singular values, and
delta_d is one minus the mean absolute inner product of index-paired
singular vectors (sign-invariant).  Indices touching a near-degenerate
adjacent pair in either spectrum are excluded from delta_d, since the
vector pairing is not identifiable there; the report flags when that
happened.

The paired one-step check branches the principal weight from a common
state: one branch takes the plain task-gradient step, the other
additionally subtracts the scheduled regularizer term.  The two branches
then differ by exactly gamma_t times the regularizer direction, so by
Weyl's inequality every singular value moves by at most gamma * eps_grad,
where eps_grad is the Frobenius norm of the regularizer gradient mapped
to principal-weight space.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .adapters import SorsaAdapter, effective_weight, init_sorsa
from .linalg import SvdResult, check_matrix, condition_number, svd
from .optimizer import MetricsTrace, TrainConfig, schedule, sorsa_step
from .regularizer import reg_grad, reg_loss
from .tasks import Task, check_task_weight

DEGENERATE_GAP = 1e-8
WEYL_SLACK = 1e-9


@dataclass(frozen=True)
class DriftReport:
    step: int
    delta_sigma: float
    delta_d: float
    per_index_du: np.ndarray
    per_index_dv: np.ndarray
    degenerate_spectrum_flag: bool


@dataclass
class ConditionTrace:
    run_label: str  # "regularized" | "unregularized"
    steps: list[int] = field(default_factory=list)
    kappas: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class WeylCheck:
    step: int
    eps_grad: float
    max_sigma_gap: float
    bound: float
    satisfied: bool
    diff_norm: float


@dataclass(frozen=True)
class ConvergenceReport:
    mu_train: float
    l_train: float
    c_reg_hat: float
    l_reg_hat: float
    fitted_rate: float
    predicted_rate: float
    eta: float
    gamma: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


@dataclass
class TwinResult:
    """Everything a paired regularized/unregularized run produces."""

    trace_reg: ConditionTrace
    trace_unreg: ConditionTrace
    weyl_checks: list[WeylCheck]
    drift_reg: list[DriftReport]
    drift_unreg: list[DriftReport]
    metrics_reg: MetricsTrace
    metrics_unreg: MetricsTrace
    final_loss_reg: float
    final_loss_unreg: float


def delta_sigma(w0: np.ndarray, wt: np.ndarray) -> float:
    """Mean absolute difference of the two descending spectra."""
    w0 = check_matrix(w0, "w0")
    wt = check_matrix(wt, "wt")
    if w0.shape != wt.shape:
        raise ValueError(f"shape mismatch: {w0.shape} vs {wt.shape}")
    return float(np.mean(np.abs(svd(wt).s - svd(w0).s)))


def delta_d(w0: np.ndarray, wt: np.ndarray) -> float:
    """Singular-vector misalignment in [0, 1]; 0 when subspaces are unchanged."""
    return drift_report(0, svd(check_matrix(w0, "w0")), wt).delta_d


def _degenerate_indices(s: np.ndarray) -> set[int]:
    """Indices adjacent to a gap below DEGENERATE_GAP * sigma_max."""
    out: set[int] = set()
    smax = float(s[0]) if s.size else 0.0
    tol = DEGENERATE_GAP * max(smax, 0.0)
    for i in range(s.size - 1):
        if abs(float(s[i]) - float(s[i + 1])) < tol or smax == 0.0:
            out.add(i)
            out.add(i + 1)
    return out


def drift_report(step: int, ref: SvdResult, wt: np.ndarray) -> DriftReport:
    """Drift of wt against a pre-decomposed reference weight."""
    cur = svd(check_matrix(wt, "wt"))
    if ref.u.shape[0] != cur.u.shape[0] or ref.v.shape[0] != cur.v.shape[0]:
        raise ValueError("drift requires matching shapes")
    dsig = float(np.mean(np.abs(cur.s - ref.s)))
    du = np.abs(np.sum(cur.u * ref.u, axis=0))
    dv = np.abs(np.sum(cur.v * ref.v, axis=0))
    excluded = _degenerate_indices(ref.s) | _degenerate_indices(cur.s)
    k = ref.s.size
    kept = [i for i in range(k) if i not in excluded]
    if kept:
        aligned = float(np.sum(du[kept]) + np.sum(dv[kept])) / (2 * len(kept))
        dd = 1.0 - aligned
    else:
        dd = 0.0
    dd = min(max(dd, 0.0), 1.0)
    return DriftReport(
        step=step,
        delta_sigma=dsig,
        delta_d=dd,
        per_index_du=du,
        per_index_dv=dv,
        degenerate_spectrum_flag=bool(excluded),
    )


def principal_weight(adapter: SorsaAdapter) -> np.ndarray:
    return (adapter.u_p * adapter.s_p) @ adapter.v_p.T


def principal_condition(adapter: SorsaAdapter) -> float:
    """kappa of the rank-r principal weight: sigma_1 / sigma_r."""
    return condition_number(principal_weight(adapter), rank_hint=adapter.r)


def regularizer_direction(adapter: SorsaAdapter) -> np.ndarray:
    """Regularizer gradient pushed forward to principal-weight space.

    For W_p = u diag(s) v^T with factor gradients (r_u, r_v), an
    infinitesimal factor step moves W_p along
    r_u diag(s) v^T + u diag(s) r_v^T (the s block has no penalty).
    """
    r_u, r_v = reg_grad(adapter.u_p, adapter.v_p)
    return (r_u * adapter.s_p) @ adapter.v_p.T + (adapter.u_p * adapter.s_p) @ r_v.T


def weyl_probe(
    adapter: SorsaAdapter, g_train_w: np.ndarray, cfg: TrainConfig, t: int
) -> WeylCheck:
    """Branch one principal-weight step with and without the regularizer.

    Both branches share the task-gradient step; the regularized branch
    additionally subtracts gamma_t = eta_t * gamma / eta_max times the
    regularizer direction.  No clipping is applied: this probes the pure
    two-rate update, whose branch gap is exactly gamma_t * eps_grad.
    """
    eta = schedule(cfg, t)
    gamma_t = eta * cfg.gamma / cfg.eta_max
    direction = regularizer_direction(adapter)
    eps_grad = float(np.sqrt(np.sum(direction * direction)))
    w_p = principal_weight(adapter)
    branch_unreg = w_p - eta * g_train_w
    branch_reg = branch_unreg - gamma_t * direction
    gap = float(np.max(np.abs(svd(branch_reg).s - svd(branch_unreg).s)))
    diff = branch_reg - branch_unreg
    bound = cfg.gamma * eps_grad
    return WeylCheck(
        step=t,
        eps_grad=eps_grad,
        max_sigma_gap=gap,
        bound=bound,
        satisfied=gap <= bound + WEYL_SLACK,
        diff_norm=float(np.sqrt(np.sum(diff * diff))),
    )


def twin_run(task: Task, cfg: TrainConfig) -> TwinResult:
    """Train two identically seeded runs, gamma > 0 vs gamma = 0.

    Per step this records kappa(W_p) and drift for both runs and one
    paired one-step branch comparison taken at the regularized run's
    pre-step state.  Entries exist for steps 0..total_steps, so index 0
    is the shared initialization and the last entry is the final state.
    """
    if cfg.gamma < 0:
        raise ValueError("twin run needs gamma >= 0 in the regularized config")
    cfg_unreg = replace(cfg, gamma=0.0)
    ad_reg = init_sorsa(task.w0, cfg.rank, seed=cfg.seed)
    ad_unreg = init_sorsa(task.w0, cfg.rank, seed=cfg.seed)
    check_task_weight(task, effective_weight(ad_reg))
    ref = svd(task.w0)

    result = TwinResult(
        trace_reg=ConditionTrace("regularized"),
        trace_unreg=ConditionTrace("unregularized"),
        weyl_checks=[],
        drift_reg=[],
        drift_unreg=[],
        metrics_reg=MetricsTrace(),
        metrics_unreg=MetricsTrace(),
        final_loss_reg=math.nan,
        final_loss_unreg=math.nan,
    )

    def observe(store_trace, store_drift, adapter, t):
        store_trace.steps.append(t)
        store_trace.kappas.append(principal_condition(adapter))
        store_drift.append(drift_report(t, ref, effective_weight(adapter)))

    for t in range(cfg.total_steps):
        observe(result.trace_reg, result.drift_reg, ad_reg, t)
        observe(result.trace_unreg, result.drift_unreg, ad_unreg, t)

        w_reg = effective_weight(ad_reg)
        g_reg = task.grad(w_reg)
        result.weyl_checks.append(weyl_probe(ad_reg, g_reg, cfg, t))
        result.metrics_reg.records.append(
            sorsa_step(ad_reg, g_reg, cfg, t, train_loss=task.loss(w_reg))
        )

        w_unreg = effective_weight(ad_unreg)
        g_unreg = task.grad(w_unreg)
        result.metrics_unreg.records.append(
            sorsa_step(ad_unreg, g_unreg, cfg_unreg, t, train_loss=task.loss(w_unreg))
        )

    observe(result.trace_reg, result.drift_reg, ad_reg, cfg.total_steps)
    observe(result.trace_unreg, result.drift_unreg, ad_unreg, cfg.total_steps)
    result.final_loss_reg = float(task.loss(effective_weight(ad_reg)))
    result.final_loss_unreg = float(task.loss(effective_weight(ad_unreg)))
    return result


def _flatten(u: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.concatenate([u.reshape(-1), s, v.reshape(-1)])


def estimate_constants(
    task: Task,
    cfg: TrainConfig,
    directions: int = 200,
    hvp_step: float = 1e-5,
) -> ConvergenceReport:
    """Fit the geometric decay of F - F* and estimate the penalty's
    Hessian bounds along the visited trajectory.

    The descent runs on the trainable factor vector itself, with the data
    term an exact unit-curvature quadratic pulling toward a seeded target
    vector: that is the one variable in which the task constants mu = L = 1
    are available analytically, so the convergence bound
    1 - eta (mu - gamma c_reg) is checkable as stated.  The step size is
    cfg.eta_max, held constant.

    Hessian bounds come from central-difference Hessian-vector products of
    the regularizer gradient along random unit directions at states
    sampled round-robin from the trajectory: c_reg_hat = max(0, -min
    quotient), l_reg_hat = max quotient.
    """
    if task.spec.kind != "quadratic":
        raise ValueError("convergence constants require the quadratic task")
    adapter = init_sorsa(task.w0, cfg.rank, seed=cfg.seed)
    m, n, r = adapter.u_p.shape[0], adapter.v_p.shape[0], adapter.r
    u, s, v = adapter.u_p.copy(), adapter.s_p.copy(), adapter.v_p.copy()
    theta_star = _flatten(u, s, v) + 0.25 * rng.stream(cfg.seed, "theta_star").standard_normal(
        m * r + r + n * r
    )
    eta = cfg.eta_max
    gamma = cfg.gamma

    def objective(u, s, v) -> float:
        d = _flatten(u, s, v) - theta_star
        return 0.5 * float(d @ d) + gamma * reg_loss(u, v)

    values: list[float] = []
    visited: list[tuple[np.ndarray, np.ndarray]] = []
    stride = max(1, cfg.total_steps // 20)
    for t in range(cfg.total_steps):
        values.append(objective(u, s, v))
        if t % stride == 0:
            visited.append((u.copy(), v.copy()))
        d = _flatten(u, s, v) - theta_star
        g_u = d[: m * r].reshape(m, r)
        g_s = d[m * r : m * r + r]
        g_v = d[m * r + r :].reshape(n, r)
        if gamma != 0.0:
            r_u, r_v = reg_grad(u, v)
            g_u = g_u + gamma * r_u
            g_v = g_v + gamma * r_v
        u -= eta * g_u
        s -= eta * g_s
        v -= eta * g_v
    values.append(objective(u, s, v))
    visited.append((u.copy(), v.copy()))

    f_star = min(values)
    f0_gap = values[0] - f_star
    floor = max(1e-18 * max(1.0, values[0]), 1e-14 * f0_gap)
    points = [
        (t, math.log(val - f_star))
        for t, val in enumerate(values)
        if val - f_star > floor
    ]
    if len(points) >= 2:
        ts = np.array([p[0] for p in points])
        logs = np.array([p[1] for p in points])
        slope = float(np.polyfit(ts, logs, 1)[0])
        fitted = math.exp(slope)
    else:
        fitted = 0.0

    gen = rng.stream(cfg.seed, "hvp")
    quotients: list[float] = []
    size = m * r + n * r
    for i in range(directions):
        base_u, base_v = visited[i % len(visited)]
        d = gen.standard_normal(size)
        d /= np.sqrt(d @ d)
        du = d[: m * r].reshape(m, r)
        dv = d[m * r :].reshape(n, r)
        gu_plus, gv_plus = reg_grad(base_u + hvp_step * du, base_v + hvp_step * dv)
        gu_minus, gv_minus = reg_grad(base_u - hvp_step * du, base_v - hvp_step * dv)
        hd = np.concatenate(
            [(gu_plus - gu_minus).reshape(-1), (gv_plus - gv_minus).reshape(-1)]
        ) / (2 * hvp_step)
        quotients.append(float(d @ hd))
    c_reg_hat = max(0.0, -min(quotients))
    l_reg_hat = max(quotients)
    mu = float(task.mu_train)
    predicted = 1.0 - eta * (mu - gamma * c_reg_hat)
    return ConvergenceReport(
        mu_train=mu,
        l_train=float(task.l_train),
        c_reg_hat=c_reg_hat,
        l_reg_hat=l_reg_hat,
        fitted_rate=fitted,
        predicted_rate=predicted,
        eta=eta,
        gamma=gamma,
    )
