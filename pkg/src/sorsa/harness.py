"""Experiment orchestration: method comparisons, twin runs, file output.

Every run is described by a manifest (task spec + train config + method +
code version) serialized as canonical JSON; output file names embed the
first 12 hex digits of the manifest's SHA-256 so concurrent runs never
collide and identical manifests overwrite with identical bytes.  All CSV
cells are printed with 17 significant digits, which makes re-runs
byte-comparable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .adapters import (
    Adapter,
    PissaAdapter,
    SorsaAdapter,
    effective_weight,
    init_full,
    init_lora,
    init_pissa,
    init_sorsa,
    save_adapter,
)
from .analysis import TwinResult, drift_report, twin_run
from .linalg import condition_number, format_value, save_matrix_csv, svd
from .optimizer import MetricsTrace, TrainConfig, train
from .tasks import Task, TaskSpec, make_task

METHODS = ("sorsa", "sorsa_noreg", "lora", "pissa", "full")

# Desk-scale defaults: full-batch gradient descent on 16x12 weights needs a
# far larger peak rate than the reference recipe the config defaults mirror,
# and a gamma sized so the penalty visibly counteracts factor drift within
# 500 steps.  Calibrated over seeds 0..9 on the default teacher task.
DESK_ETA_MAX = 0.05
DESK_GAMMA = 0.05


def desk_config(**overrides) -> TrainConfig:
    base = dict(eta_max=DESK_ETA_MAX, gamma=DESK_GAMMA)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass(frozen=True)
class ExperimentResult:
    method: str
    config: TrainConfig
    final_train_loss: float
    final_kappa: float
    final_delta_sigma: float
    final_delta_d: float
    trace_path: str | None = None


class ConfigError(ValueError):
    """Raised for malformed or unknown-key config files."""


def _from_dict(cls, payload: dict, what: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{what} config must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - allowed)
    if unknown:
        raise ConfigError(f"unknown {what} keys: {', '.join(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what} config: {exc}") from exc


def load_task_spec(path) -> TaskSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return _from_dict(TaskSpec, json.load(fh), "task")


def load_train_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return _from_dict(TrainConfig, json.load(fh), "train")


def build_manifest(command: str, spec: TaskSpec, cfg: TrainConfig, **extra) -> dict:
    manifest = {
        "code_version": __version__,
        "command": command,
        "task": dataclasses.asdict(spec),
        "train": dataclasses.asdict(cfg),
    }
    manifest.update(extra)
    return manifest


def manifest_hash(manifest: dict) -> str:
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def write_manifest(out_dir: str, manifest: dict) -> str:
    tag = manifest_hash(manifest)
    path = os.path.join(out_dir, f"manifest-{tag}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return tag


def init_adapter(method: str, task: Task, cfg: TrainConfig) -> Adapter:
    if method in ("sorsa", "sorsa_noreg"):
        return init_sorsa(task.w0, cfg.rank, seed=cfg.seed)
    if method == "lora":
        return init_lora(task.w0, cfg.rank, seed=cfg.seed)
    if method == "pissa":
        return init_pissa(task.w0, cfg.rank, seed=cfg.seed)
    if method == "full":
        return init_full(task.w0, seed=cfg.seed)
    raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")


def method_config(method: str, base_cfg: TrainConfig) -> TrainConfig:
    if method == "sorsa_noreg":
        return dataclasses.replace(base_cfg, gamma=0.0)
    return base_cfg


def final_kappa(method: str, adapter: Adapter) -> float:
    """kappa(W_p, rank hint r) where a principal part exists, else kappa of
    the merged weight over its nonzero spectrum."""
    if isinstance(adapter, SorsaAdapter):
        return condition_number(
            (adapter.u_p * adapter.s_p) @ adapter.v_p.T, rank_hint=adapter.r
        )
    if isinstance(adapter, PissaAdapter):
        return condition_number(adapter.a @ adapter.b, rank_hint=adapter.r)
    return condition_number(effective_weight(adapter))


def run_method(
    method: str,
    task: Task,
    base_cfg: TrainConfig,
    out_dir: str | None = None,
    manifest_extra: dict | None = None,
) -> tuple[ExperimentResult, Adapter, MetricsTrace]:
    """Train one method on the task and summarize its endpoint."""
    cfg = method_config(method, base_cfg)
    adapter = init_adapter(method, task, cfg)
    trace = train(adapter, task, cfg)
    w_final = effective_weight(adapter)
    drift = drift_report(cfg.total_steps, svd(task.w0), w_final)
    trace_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        manifest = build_manifest("train", task.spec, cfg, method=method)
        if manifest_extra:
            manifest.update(manifest_extra)
        tag = write_manifest(out_dir, manifest)
        trace_path = os.path.join(out_dir, f"trace-{method}-{tag}.csv")
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write(trace.to_csv())
        save_matrix_csv(os.path.join(out_dir, f"final-weight-{method}-{tag}.csv"), w_final)
        save_adapter(os.path.join(out_dir, f"checkpoint-{method}-{tag}.txt"), adapter)
    result = ExperimentResult(
        method=method,
        config=cfg,
        final_train_loss=float(task.loss(w_final)),
        final_kappa=final_kappa(method, adapter),
        final_delta_sigma=drift.delta_sigma,
        final_delta_d=drift.delta_d,
        trace_path=trace_path,
    )
    return result, adapter, trace


def compare_methods(
    task: Task,
    base_cfg: TrainConfig,
    methods: list[str],
    out_dir: str | None = None,
) -> list[ExperimentResult]:
    """Train every method on byte-identical task data and shared schedule."""
    results = []
    for method in methods:
        result, _, _ = run_method(method, task, base_cfg, out_dir=out_dir)
        results.append(result)
    if out_dir is not None:
        manifest = build_manifest("compare", task.spec, base_cfg, methods=list(methods))
        tag = write_manifest(out_dir, manifest)
        payload = [
            {
                "method": r.method,
                "final_train_loss": r.final_train_loss,
                "final_kappa": r.final_kappa,
                "final_delta_sigma": r.final_delta_sigma,
                "final_delta_d": r.final_delta_d,
                "trace_path": r.trace_path,
            }
            for r in results
        ]
        with open(os.path.join(out_dir, f"results-{tag}.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return results


def _analysis_rows(result: TwinResult, which: str) -> list[str]:
    if which == "regularized":
        trace, drifts = result.trace_reg, result.drift_reg
    else:
        trace, drifts = result.trace_unreg, result.drift_unreg
    probes = {check.step: check for check in result.weyl_checks} if which == "regularized" else {}
    rows = ["step,delta_sigma,delta_d,kappa,eps_grad,weyl_bound,weyl_gap,flags"]
    for step, kappa, drift in zip(trace.steps, trace.kappas, drifts):
        probe = probes.get(step)
        rows.append(
            ",".join(
                (
                    str(step),
                    format_value(drift.delta_sigma),
                    format_value(drift.delta_d),
                    format_value(kappa),
                    format_value(probe.eps_grad if probe else math.nan),
                    format_value(probe.bound if probe else math.nan),
                    format_value(probe.max_sigma_gap if probe else math.nan),
                    "1" if drift.degenerate_spectrum_flag else "0",
                )
            )
        )
    return rows


def run_twin(task: Task, cfg: TrainConfig, out_dir: str | None = None) -> TwinResult:
    """Twin run plus, when out_dir is set, one analysis CSV and one metrics
    CSV per branch."""
    result = twin_run(task, cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        manifest = build_manifest("twin", task.spec, cfg)
        tag = write_manifest(out_dir, manifest)
        for which, metrics in (
            ("regularized", result.metrics_reg),
            ("unregularized", result.metrics_unreg),
        ):
            path = os.path.join(out_dir, f"twin-analysis-{which}-{tag}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(_analysis_rows(result, which)) + "\n")
            path = os.path.join(out_dir, f"twin-trace-{which}-{tag}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(metrics.to_csv())
    return result


def matched_loss_drift(result: TwinResult, rel_tol: float = 0.05) -> tuple[float, float, bool]:
    """Final delta_d of both branches plus the matched-loss precondition.

    The two branches share the seed, schedule, and step budget, so their
    training progress is matched by construction; the returned flag
    certifies it by requiring the final losses to agree within rel_tol
    relative.  Drift comparisons are only meaningful when the flag holds
    (with the coupled two-rate update the final losses land within a
    couple of percent of each other at desk scale).
    """
    worse = max(result.final_loss_reg, result.final_loss_unreg)
    gap = abs(result.final_loss_reg - result.final_loss_unreg) / max(worse, 1e-300)
    return (
        result.drift_reg[-1].delta_d,
        result.drift_unreg[-1].delta_d,
        gap <= rel_tol,
    )


def drift_between(w0: np.ndarray, wt: np.ndarray) -> dict:
    """delta_sigma / delta_d summary between two saved weights."""
    report = drift_report(0, svd(w0), wt)
    return {
        "delta_sigma": report.delta_sigma,
        "delta_d": report.delta_d,
        "degenerate_spectrum_flag": report.degenerate_spectrum_flag,
    }
