"""Acceptance suites: one callable per criterion family, shared by the CLI
`verify` subcommand and the pytest acceptance module.

Each check returns a CheckResult with a pass flag and a one-line detail
string (worst observed margin, counts, runtime).  Tolerances are fixed
here, not configurable: they are the package's exit criteria.
"""

from __future__ import annotations

import copy
import filecmp
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .adapters import (
    effective_weight,
    factor_gradients,
    forward,
    init_full,
    init_lora,
    init_pissa,
    init_sorsa,
    trainable_parameter_count,
)
from .analysis import drift_report, estimate_constants, twin_run
from .harness import DESK_GAMMA, desk_config, matched_loss_drift
from .linalg import frobenius_norm, svd
from .optimizer import TrainConfig, train
from .regularizer import lipschitz_certificate, reg_grad, reg_loss
from .tasks import TaskSpec, make_task


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def check_svd_correctness() -> CheckResult:
    """C1: reconstruction, orthonormality, and eigen-oracle agreement on
    1000 random matrices up to 16x16 in under 10 s."""
    gen = rng.stream(1, "acceptance_svd")
    worst_rec = worst_orth = worst_sig = 0.0
    start = time.perf_counter()
    for _ in range(1000):
        m = int(gen.integers(1, 17))
        n = int(gen.integers(1, 17))
        w = gen.standard_normal((m, n))
        res = svd(w)
        k = res.rank_width
        rec = frobenius_norm(res.reconstruct() - w) / max(1.0, frobenius_norm(w))
        orth = max(
            frobenius_norm(res.u.T @ res.u - np.eye(k)),
            frobenius_norm(res.v.T @ res.v - np.eye(k)),
        )
        gram = w.T @ w if m >= n else w @ w.T
        oracle = np.sqrt(np.clip(np.linalg.eigvalsh(gram), 0.0, None))[::-1]
        scale = max(1.0, float(oracle[0]))
        sig = float(np.max(np.abs(res.s - oracle) / np.maximum(oracle, 1e-6 * scale)))
        worst_rec = max(worst_rec, rec)
        worst_orth = max(worst_orth, orth)
        worst_sig = max(worst_sig, sig)
    elapsed = time.perf_counter() - start
    ok = worst_rec <= 1e-10 and worst_orth <= 1e-10 and worst_sig <= 1e-8 and elapsed < 10.0
    return _result(
        "C1 svd-correctness",
        ok,
        f"rec {worst_rec:.2e} orth {worst_orth:.2e} sigma {worst_sig:.2e} time {elapsed:.2f}s",
    )


def check_init_identities() -> CheckResult:
    """C2: every adapter reproduces w0 at init; exact trainable counts."""
    gen = rng.stream(2, "acceptance_init")
    worst = 0.0
    counts_ok = True
    for _ in range(100):
        m = int(gen.integers(2, 17))
        n = int(gen.integers(2, 17))
        k = min(m, n)
        r = int(gen.integers(1, k))
        w0 = gen.standard_normal((m, n))
        sorsa = init_sorsa(w0, r)
        pissa = init_pissa(w0, r)
        lora = init_lora(w0, r, seed=int(gen.integers(0, 2**32)))
        denom = max(1.0, frobenius_norm(w0))
        worst = max(
            worst,
            frobenius_norm(effective_weight(sorsa) - w0) / denom,
            frobenius_norm(effective_weight(pissa) - w0) / denom,
            frobenius_norm(effective_weight(lora) - w0) / denom,
        )
        counts_ok = counts_ok and trainable_parameter_count(sorsa) == r * (m + n + 1)
        counts_ok = counts_ok and trainable_parameter_count(pissa) == r * (m + n)
        counts_ok = counts_ok and trainable_parameter_count(lora) == r * (m + n)
    ok = worst <= 1e-8 and counts_ok
    return _result(
        "C2 init-identities", ok, f"worst rel err {worst:.2e} counts {'ok' if counts_ok else 'BAD'}"
    )


def _fd_gradient(fn, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    grad = out.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        f_plus = fn()
        flat[i] = keep - h
        f_minus = fn()
        flat[i] = keep
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return out


def _rel_gap(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.sqrt(np.sum(numeric * numeric))), 1e-12)
    return float(np.sqrt(np.sum((analytic - numeric) ** 2))) / denom


def check_gradients() -> CheckResult:
    """C3: factor and penalty gradients vs central differences, 100 instances
    each, within 1e-5 relative in under 30 s."""
    gen = rng.stream(3, "acceptance_grad")
    worst = 0.0
    start = time.perf_counter()
    for _ in range(100):
        m = int(gen.integers(2, 9))
        n = int(gen.integers(2, 7))
        r = int(gen.integers(1, min(m, n, 4)))
        adapter = init_sorsa(gen.standard_normal((m, n)), r)
        adapter.u_p += 0.1 * gen.standard_normal(adapter.u_p.shape)
        adapter.s_p += 0.1 * gen.standard_normal(adapter.s_p.shape)
        adapter.v_p += 0.1 * gen.standard_normal(adapter.v_p.shape)
        target = gen.standard_normal((m, n))

        def loss() -> float:
            d = (adapter.u_p * adapter.s_p) @ adapter.v_p.T - target
            return 0.5 * float(np.sum(d * d))

        g_w = (adapter.u_p * adapter.s_p) @ adapter.v_p.T - target
        g_u, g_s, g_v = factor_gradients(adapter, g_w)
        worst = max(
            worst,
            _rel_gap(g_u, _fd_gradient(loss, adapter.u_p)),
            _rel_gap(g_s, _fd_gradient(loss, adapter.s_p)),
            _rel_gap(g_v, _fd_gradient(loss, adapter.v_p)),
        )
    for _ in range(100):
        m = int(gen.integers(2, 9))
        n = int(gen.integers(2, 7))
        r = int(gen.integers(1, min(m, n, 4)))
        u = gen.standard_normal((m, r))
        v = gen.standard_normal((n, r))

        def penalty() -> float:
            return reg_loss(u, v)

        g_u, g_v = reg_grad(u, v)
        worst = max(
            worst,
            _rel_gap(g_u, _fd_gradient(penalty, u)),
            _rel_gap(g_v, _fd_gradient(penalty, v)),
        )
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 30.0
    return _result("C3 gradient-correctness", ok, f"worst rel err {worst:.2e} time {elapsed:.2f}s")


def check_lipschitz_certificate() -> CheckResult:
    """C4: the loss never moves faster than the certificate allows, on 1000
    factor pairs with Frobenius norms up to 3."""
    gen = rng.stream(4, "acceptance_cert")
    worst_excess = -math.inf
    for _ in range(1000):
        m = int(gen.integers(2, 9))
        n = int(gen.integers(2, 9))
        r = int(gen.integers(1, min(m, n) + 1))

        def draw(rows: int) -> np.ndarray:
            raw = gen.standard_normal((rows, r))
            target_norm = float(gen.uniform(0.0, 3.0))
            nrm = float(np.sqrt(np.sum(raw * raw)))
            return raw * (target_norm / nrm)

        u1, u2 = draw(m), draw(m)
        v1, v2 = draw(n), draw(n)
        m_u = max(frobenius_norm(u1), frobenius_norm(u2))
        m_v = max(frobenius_norm(v1), frobenius_norm(v2))
        lhs = abs(reg_loss(u1, v1) - reg_loss(u2, v2))
        rhs = lipschitz_certificate(m_u, m_v) * (
            frobenius_norm(u1 - u2) + frobenius_norm(v1 - v2)
        )
        worst_excess = max(worst_excess, lhs - rhs)
    ok = worst_excess <= 1e-12
    return _result("C4 lipschitz-certificate", ok, f"worst lhs-rhs {worst_excess:.2e}")


def check_merge_equivalence() -> CheckResult:
    """C9: batched forward equals multiplication by the merged weight at 10
    checkpoints of a live run."""
    task = make_task(TaskSpec(seed=0))
    cfg = desk_config(total_steps=200, seed=0)
    worst = 0.0
    for method_init in (init_sorsa, init_pissa):
        adapter = method_init(task.w0, cfg.rank, seed=cfg.seed)
        probe_gen = rng.stream(9, "acceptance_merge")
        checkpoints: list = []

        def observer(t, ad, record):
            if t % 20 == 0:
                checkpoints.append(copy.deepcopy(ad))

        train(adapter, task, cfg, observer=observer)
        for ad in checkpoints[:10]:
            x = probe_gen.standard_normal((5, task.spec.m))
            gap = float(np.max(np.abs(forward(x, ad) - x @ effective_weight(ad))))
            worst = max(worst, gap)
    ok = worst <= 1e-6
    return _result("C9 merge-equivalence", ok, f"worst |forward - merged| {worst:.2e}")


def check_weyl() -> CheckResult:
    """C5: every paired one-step branch in a 500-step twin run obeys the
    perturbation bound gamma * eps_grad, with zero violations."""
    task = make_task(TaskSpec(seed=0))
    cfg = desk_config(gamma=4e-4, total_steps=500, seed=0)
    result = twin_run(task, cfg)
    violations = sum(not check.satisfied for check in result.weyl_checks)
    unconditional = max(
        check.max_sigma_gap - check.diff_norm for check in result.weyl_checks
    )
    worst_margin = max(
        check.max_sigma_gap - check.bound for check in result.weyl_checks
    )
    ok = violations == 0 and unconditional <= 1e-9
    return _result(
        "C5 weyl-one-step",
        ok,
        f"violations {violations}/{len(result.weyl_checks)} worst gap-bound {worst_margin:.2e}",
    )


def check_linear_rate() -> CheckResult:
    """C6: fitted contraction of F - F* against the convergence bound, for
    the unregularized and the weakly regularized quadratic."""
    start = time.perf_counter()
    task = make_task(TaskSpec(kind="quadratic", seed=0))
    base = TrainConfig(
        eta_max=0.5, gamma=0.0, schedule="constant", total_steps=80,
        grad_clip=None, rank=4, seed=0, warmup_ratio=0.0,
    )
    plain = estimate_constants(task, base)
    ok_plain = plain.fitted_rate <= 0.55 and plain.fitted_rate <= plain.predicted_rate + 0.05

    gamma = 1e-3
    pilot = estimate_constants(task, replace(base, gamma=gamma))
    eta = 1.0 / (1.0 + gamma * pilot.l_reg_hat)
    tuned = estimate_constants(task, replace(base, gamma=gamma, eta_max=eta))
    bound = 1.0 - eta * (1.0 - gamma * tuned.c_reg_hat)
    precondition = tuned.c_reg_hat == 0.0 or gamma < 1.0 / tuned.c_reg_hat
    ok_reg = precondition and tuned.fitted_rate <= bound + 0.05
    elapsed = time.perf_counter() - start
    ok = ok_plain and ok_reg and elapsed < 20.0
    return _result(
        "C6 linear-rate",
        ok,
        f"plain fitted {plain.fitted_rate:.4f} (<=0.55) reg fitted {tuned.fitted_rate:.2e} "
        f"bound {bound + 0.05:.4f} time {elapsed:.2f}s",
    )


def _twin_suite(seeds=range(10)):
    outcomes = []
    for seed in seeds:
        task = make_task(TaskSpec(seed=seed))
        cfg = desk_config(gamma=DESK_GAMMA, total_steps=500, seed=seed)
        outcomes.append(twin_run(task, cfg))
    return outcomes


def check_condition_dominance(outcomes=None) -> CheckResult:
    """C7: final kappa of the regularized branch strictly below the
    unregularized branch on at least 9 of 10 seeds."""
    outcomes = outcomes if outcomes is not None else _twin_suite()
    wins = sum(
        out.trace_reg.kappas[-1] < out.trace_unreg.kappas[-1] for out in outcomes
    )
    ok = wins >= 9
    return _result("C7 condition-dominance", ok, f"kappa_reg < kappa_unreg on {wins}/10 seeds")


def check_drift_ordering(outcomes=None) -> CheckResult:
    """C8: zero drift at t=0 for every method, and smaller final
    singular-vector drift for the regularized branch on >= 9/10 seeds at
    matched final loss."""
    task = make_task(TaskSpec(seed=0))
    ref = svd(task.w0)
    worst_zero = 0.0
    adapters = [
        init_sorsa(task.w0, 4),
        init_pissa(task.w0, 4),
        init_lora(task.w0, 4, seed=0),
        init_full(task.w0),
    ]
    for adapter in adapters:
        report = drift_report(0, ref, effective_weight(adapter))
        worst_zero = max(worst_zero, report.delta_sigma, report.delta_d)

    outcomes = outcomes if outcomes is not None else _twin_suite()
    wins = 0
    all_matched = True
    for out in outcomes:
        dd_reg, dd_unreg, matched = matched_loss_drift(out)
        all_matched = all_matched and matched
        wins += dd_reg < dd_unreg
    ok = worst_zero <= 1e-10 and all_matched and wins >= 9
    return _result(
        "C8 drift-ordering",
        ok,
        f"t=0 drift {worst_zero:.2e} matched {all_matched} dd_reg < dd_unreg on {wins}/10 seeds",
    )


def check_cli_determinism() -> CheckResult:
    """C10: identical manifests give byte-identical CSVs across processes."""
    mismatched: list[str] = []
    with tempfile.TemporaryDirectory() as tmp:
        task_file = os.path.join(tmp, "task.json")
        cfg_file = os.path.join(tmp, "cfg.json")
        with open(task_file, "w", encoding="utf-8") as fh:
            fh.write('{"kind": "teacher_student", "seed": 5}\n')
        with open(cfg_file, "w", encoding="utf-8") as fh:
            fh.write('{"eta_max": 0.05, "gamma": 0.05, "total_steps": 60, "seed": 5}\n')
        commands = [
            ["train", "--method", "sorsa", "--task", task_file, "--config", cfg_file],
            ["twin", "--task", task_file, "--config", cfg_file],
        ]
        for idx, args in enumerate(commands):
            dirs = [os.path.join(tmp, f"run{idx}-{rep}") for rep in (0, 1)]
            for out_dir in dirs:
                subprocess.run(
                    [sys.executable, "-m", "sorsa", *args, "--out", out_dir],
                    check=True,
                    capture_output=True,
                )
            names = sorted(os.listdir(dirs[0]))
            if names != sorted(os.listdir(dirs[1])):
                mismatched.append(f"{args[0]}: file sets differ")
                continue
            for name in names:
                if not filecmp.cmp(
                    os.path.join(dirs[0], name), os.path.join(dirs[1], name), shallow=False
                ):
                    mismatched.append(f"{args[0]}/{name}")
    ok = not mismatched
    return _result(
        "C10 determinism", ok, "byte-identical reruns" if ok else f"mismatch: {mismatched}"
    )


def suite_svd() -> list[CheckResult]:
    return [check_svd_correctness()]


def suite_grad() -> list[CheckResult]:
    return [
        check_init_identities(),
        check_gradients(),
        check_lipschitz_certificate(),
        check_merge_equivalence(),
    ]


def suite_weyl() -> list[CheckResult]:
    return [check_weyl()]


def suite_rate() -> list[CheckResult]:
    return [check_linear_rate()]


def suite_drift() -> list[CheckResult]:
    outcomes = _twin_suite()
    return [
        check_condition_dominance(outcomes),
        check_drift_ordering(outcomes),
        check_cli_determinism(),
    ]


SUITES = {
    "svd": suite_svd,
    "grad": suite_grad,
    "weyl": suite_weyl,
    "rate": suite_rate,
    "drift": suite_drift,
}


def run_suite(name: str) -> list[CheckResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    return SUITES[name]()


def run_all() -> list[CheckResult]:
    results: list[CheckResult] = []
    for name in ("svd", "grad", "weyl", "rate", "drift"):
        results.extend(run_suite(name))
    return results
