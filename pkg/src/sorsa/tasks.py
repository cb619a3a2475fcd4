"""Synthetic desk-scale training tasks.

Every task exposes a full-batch loss L(W) and gradient dL/dW over the
merged weight, deterministic from a single seed via named streams.  The
base weight w0 is part of the task: it is built with a log-uniform
singular spectrum whose spread is set by target_cond, so experiments can
start from a well- or ill-conditioned weight on demand.  The teacher is
w0 plus a unit-Frobenius-norm update of rank target_rank (dense when
target_rank is unset), mimicking the low-rank-update regime adapters are
meant for.

Kinds:
  quadratic        L(W) = 0.5 ||W - W*||_F^2           (mu = L = 1 exactly)
  teacher_student  L(W) = 0.5/batch ||X W - Y||_F^2,   Y = X W* + noise
  two_layer        L(W) = 0.5/batch ||tanh(X W) W2 - Y||_F^2, W2 fixed
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .linalg import ShapeError, check_matrix

KINDS = ("quadratic", "teacher_student", "two_layer")

BASE_SIGMA_MAX = 2.0
TEACHER_SHIFT_NORM = 1.0


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "teacher_student"
    m: int = 16
    n: int = 12
    batch: int = 64
    noise_std: float = 0.02
    seed: int = 0
    target_rank: int | None = 4
    target_cond: float = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.m < 1 or self.n < 1:
            raise ShapeError("task dimensions must be positive")
        if self.batch < 1:
            raise ValueError("batch must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.target_rank is not None and not 1 <= self.target_rank <= min(self.m, self.n):
            raise ValueError("target_rank must lie in [1, min(m, n)]")
        if self.target_cond < 1:
            raise ValueError("target_cond must be at least 1")


@dataclass(frozen=True)
class Task:
    """Loss and gradient evaluators plus the weights they were built from."""

    spec: TaskSpec
    w0: np.ndarray
    w_star: np.ndarray
    loss: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    mu_train: float | None = None
    l_train: float | None = None


def _orthonormal_columns(gen: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Random orthonormal columns by modified Gram-Schmidt (re-orthogonalized)."""
    g = gen.standard_normal((rows, cols))
    q = np.zeros_like(g)
    for j in range(cols):
        w = g[:, j]
        for _ in range(2):
            w = w - q[:, :j] @ (q[:, :j].T @ w)
        q[:, j] = w / np.sqrt(np.sum(w * w))
    return q


def _base_weight(spec: TaskSpec) -> np.ndarray:
    gen = rng.stream(spec.seed, "w0")
    k = min(spec.m, spec.n)
    if k == 1:
        sigmas = np.array([BASE_SIGMA_MAX])
    else:
        sigmas = BASE_SIGMA_MAX * spec.target_cond ** (-np.arange(k) / (k - 1))
    u = _orthonormal_columns(gen, spec.m, k)
    v = _orthonormal_columns(gen, spec.n, k)
    return (u * sigmas) @ v.T


def _teacher_shift(spec: TaskSpec) -> np.ndarray:
    gen = rng.stream(spec.seed, "teacher_shift")
    r = spec.target_rank if spec.target_rank is not None else min(spec.m, spec.n)
    left = gen.standard_normal((spec.m, r))
    right = gen.standard_normal((r, spec.n))
    shift = left @ right
    return shift * (TEACHER_SHIFT_NORM / np.sqrt(np.sum(shift * shift)))


def make_task(spec: TaskSpec) -> Task:
    """Instantiate the task's data and closures, deterministic from spec.seed."""
    w0 = _base_weight(spec)
    w_star = w0 + _teacher_shift(spec)

    if spec.kind == "quadratic":

        def loss(w: np.ndarray) -> float:
            d = w - w_star
            return 0.5 * float(np.sum(d * d))

        def grad(w: np.ndarray) -> np.ndarray:
            return w - w_star

        return Task(spec, w0, w_star, loss, grad, mu_train=1.0, l_train=1.0)

    x = rng.stream(spec.seed, "data").standard_normal((spec.batch, spec.m))
    noise = spec.noise_std * rng.stream(spec.seed, "noise").standard_normal(
        (spec.batch, spec.n)
    )

    if spec.kind == "teacher_student":
        y = x @ w_star + noise

        def loss(w: np.ndarray) -> float:
            resid = x @ w - y
            return 0.5 / spec.batch * float(np.sum(resid * resid))

        def grad(w: np.ndarray) -> np.ndarray:
            return x.T @ (x @ w - y) / spec.batch

        return Task(spec, w0, w_star, loss, grad)

    w2 = rng.stream(spec.seed, "w2").standard_normal((spec.n, spec.n)) / np.sqrt(spec.n)
    y = np.tanh(x @ w_star) @ w2 + noise

    def loss(w: np.ndarray) -> float:
        resid = np.tanh(x @ w) @ w2 - y
        return 0.5 / spec.batch * float(np.sum(resid * resid))

    def grad(w: np.ndarray) -> np.ndarray:
        hidden = np.tanh(x @ w)
        resid = hidden @ w2 - y
        return x.T @ ((resid @ w2.T) * (1.0 - hidden * hidden)) / spec.batch

    return Task(spec, w0, w_star, loss, grad)


def check_task_weight(task: Task, w: np.ndarray) -> np.ndarray:
    w = check_matrix(w, "weight")
    if w.shape != task.w0.shape:
        raise ShapeError(f"weight shape {w.shape} does not match task {task.w0.shape}")
    return w
