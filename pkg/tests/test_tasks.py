import numpy as np
import pytest

from sorsa.linalg import condition_number, svd
from sorsa.tasks import TaskSpec, make_task


def test_quadratic_minimum():
    task = make_task(TaskSpec(kind="quadratic", seed=0))
    assert task.loss(task.w_star) == 0.0
    assert np.abs(task.grad(task.w_star)).max() == 0.0
    assert task.mu_train == 1.0 and task.l_train == 1.0


def test_teacher_student_noiseless_minimum():
    task = make_task(TaskSpec(kind="teacher_student", noise_std=0.0, seed=1))
    assert task.loss(task.w_star) <= 1e-28
    assert np.abs(task.grad(task.w_star)).max() <= 1e-13


def test_gradients_match_finite_differences():
    h = 1e-5
    gen = np.random.default_rng(2)
    for kind in ("quadratic", "teacher_student", "two_layer"):
        task = make_task(TaskSpec(kind=kind, m=5, n=4, batch=16, seed=3))
        w = task.w0 + 0.2 * gen.standard_normal(task.w0.shape)
        g = task.grad(w)
        fd = np.zeros_like(w)
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                keep = w[i, j]
                w[i, j] = keep + h
                up = task.loss(w)
                w[i, j] = keep - h
                down = task.loss(w)
                w[i, j] = keep
                fd[i, j] = (up - down) / (2 * h)
        assert np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12) <= 1e-5, kind


def test_task_is_deterministic():
    gen = np.random.default_rng(4)
    w = gen.standard_normal((16, 12))
    a = make_task(TaskSpec(seed=9))
    b = make_task(TaskSpec(seed=9))
    assert np.array_equal(a.w0, b.w0)
    assert a.loss(w) == b.loss(w)
    assert np.array_equal(a.grad(w), b.grad(w))
    c = make_task(TaskSpec(seed=10))
    assert not np.array_equal(a.w0, c.w0)


def test_base_weight_condition_is_controllable():
    for cond in (2.0, 5.0, 50.0):
        task = make_task(TaskSpec(seed=5, target_cond=cond))
        assert condition_number(task.w0) == pytest.approx(cond, rel=1e-8)


def test_teacher_shift_honors_target_rank():
    task = make_task(TaskSpec(seed=6, target_rank=3))
    shift = task.w_star - task.w0
    sigmas = svd(shift).s
    assert np.all(sigmas[3:] <= 1e-12)
    assert np.linalg.norm(shift) == pytest.approx(1.0, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        TaskSpec(kind="cubic")
    with pytest.raises(ValueError):
        TaskSpec(target_rank=99)
    with pytest.raises(ValueError):
        TaskSpec(batch=0)
    with pytest.raises(ValueError):
        TaskSpec(noise_std=-0.1)
