import numpy as np
import pytest

from sorsa.adapters import (
    FullAdapter,
    SorsaAdapter,
    effective_weight,
    factor_gradients,
    forward,
    init_full,
    init_lora,
    init_pissa,
    init_sorsa,
    initialization_error,
    load_adapter,
    save_adapter,
    trainable_parameter_count,
)
from sorsa.linalg import RankRangeError, ShapeError, frobenius_norm, svd


def test_init_sorsa_diagonal_split():
    adapter = init_sorsa(np.diag([3.0, 2.0, 1.0]), r=1)
    assert np.allclose(adapter.s_p, [3.0])
    residual_sigmas = svd(adapter.w_r).s
    assert np.allclose(residual_sigmas[:2], [2.0, 1.0], atol=1e-12)
    assert residual_sigmas[2] <= 1e-12


def test_init_equivalence_all_types():
    gen = np.random.default_rng(0)
    for _ in range(25):
        m, n = int(gen.integers(2, 12)), int(gen.integers(2, 12))
        r = int(gen.integers(1, min(m, n)))
        w0 = gen.standard_normal((m, n))
        assert initialization_error(init_sorsa(w0, r), w0) <= 1e-8
        assert initialization_error(init_pissa(w0, r), w0) <= 1e-8
        lora = init_lora(w0, r, seed=7)
        assert np.array_equal(effective_weight(lora), w0)


def test_init_sorsa_orthonormal_factors():
    gen = np.random.default_rng(7)
    adapter = init_sorsa(gen.standard_normal((8, 6)), r=2)
    assert frobenius_norm(adapter.u_p.T @ adapter.u_p - np.eye(2)) <= 1e-10
    assert frobenius_norm(adapter.v_p.T @ adapter.v_p - np.eye(2)) <= 1e-10
    assert np.all(np.diff(adapter.s_p) <= 0)


def test_init_lora_deterministic_given_seed():
    gen = np.random.default_rng(1)
    w0 = gen.standard_normal((6, 5))
    a1 = init_lora(w0, 2, seed=123)
    a2 = init_lora(w0, 2, seed=123)
    assert np.array_equal(a1.a, a2.a)
    assert np.all(a1.b == 0.0)
    a3 = init_lora(w0, 2, seed=124)
    assert not np.array_equal(a1.a, a3.a)


def test_init_pissa_diagonal_case():
    adapter = init_pissa(np.diag([3.0, 2.0, 1.0]), r=1)
    product = adapter.a @ adapter.b
    assert np.abs(product - np.diag([3.0, 0.0, 0.0])).max() <= 1e-12
    w0 = np.diag([3.0, 2.0, 1.0])
    assert frobenius_norm(adapter.a @ adapter.b + adapter.w_res - w0) <= 1e-8


def test_rank_and_degenerate_rejection():
    w0 = np.diag([3.0, 2.0, 1.0])
    for bad in (0, 3, 7):
        with pytest.raises(RankRangeError):
            init_sorsa(w0, bad)
        with pytest.raises(RankRangeError):
            init_lora(w0, bad, seed=0)
    with pytest.raises(ValueError):
        init_sorsa(np.zeros((4, 4)), 2)


def test_effective_weight_at_init_equals_w0():
    gen = np.random.default_rng(2)
    w0 = gen.standard_normal((9, 5))
    for adapter in (init_sorsa(w0, 3), init_pissa(w0, 3), init_lora(w0, 3, 0), init_full(w0)):
        assert frobenius_norm(effective_weight(adapter) - w0) <= 1e-8 * frobenius_norm(w0)


def test_forward_identity_and_zero_probes():
    gen = np.random.default_rng(3)
    w0 = gen.standard_normal((6, 4))
    adapter = init_sorsa(w0, 2)
    assert np.abs(forward(np.eye(6), adapter) - effective_weight(adapter)).max() <= 1e-12
    assert np.abs(forward(np.zeros((3, 6)), adapter)).max() == 0.0
    with pytest.raises(ShapeError):
        forward(np.zeros((3, 5)), adapter)


def test_forward_matches_dense_product():
    gen = np.random.default_rng(4)
    w0 = gen.standard_normal((7, 5))
    x = gen.standard_normal((4, 7))
    for adapter in (init_sorsa(w0, 2), init_pissa(w0, 2), init_lora(w0, 2, 1), init_full(w0)):
        assert np.abs(forward(x, adapter) - x @ effective_weight(adapter)).max() <= 1e-10


def test_factor_gradients_zero_and_identity_cases():
    gen = np.random.default_rng(5)
    adapter = init_sorsa(gen.standard_normal((5, 4)), 2)
    g_u, g_s, g_v = factor_gradients(adapter, np.zeros((5, 4)))
    assert np.abs(g_u).max() == 0.0 and np.abs(g_s).max() == 0.0 and np.abs(g_v).max() == 0.0

    identity = SorsaAdapter(
        u_p=np.eye(3), s_p=np.ones(3), v_p=np.eye(3), w_r=np.zeros((3, 3)), r=3
    )
    g_w = gen.standard_normal((3, 3))
    g_u, g_s, g_v = factor_gradients(identity, g_w)
    assert np.array_equal(g_u, g_w)
    assert np.allclose(g_s, np.diag(g_w))
    assert np.array_equal(g_v, g_w.T)


def test_factor_gradients_match_finite_differences():
    gen = np.random.default_rng(6)
    h = 1e-6
    for _ in range(20):
        m, n = int(gen.integers(2, 9)), int(gen.integers(2, 7))
        r = int(gen.integers(1, min(m, n, 4)))
        adapter = init_sorsa(gen.standard_normal((m, n)), r)
        adapter.u_p += 0.1 * gen.standard_normal((m, r))
        adapter.s_p += 0.1 * gen.standard_normal(r)
        adapter.v_p += 0.1 * gen.standard_normal((n, r))
        target = gen.standard_normal((m, n))

        def loss():
            d = (adapter.u_p * adapter.s_p) @ adapter.v_p.T - target
            return 0.5 * float(np.sum(d * d))

        g_w = (adapter.u_p * adapter.s_p) @ adapter.v_p.T - target
        analytic = factor_gradients(adapter, g_w)
        for arr, grad in zip((adapter.u_p, adapter.s_p, adapter.v_p), analytic):
            fd = np.zeros_like(arr)
            flat, fd_flat = arr.reshape(-1), fd.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                up = loss()
                flat[i] = keep - h
                down = loss()
                flat[i] = keep
                fd_flat[i] = (up - down) / (2 * h)
            assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12) <= 1e-5


def test_merge_equivalence_at_every_training_step():
    from sorsa.optimizer import TrainConfig, train
    from sorsa.tasks import TaskSpec, make_task

    task = make_task(TaskSpec(seed=11))
    cfg = TrainConfig(eta_max=0.05, gamma=0.05, total_steps=40, grad_clip=1.0,
                      seed=11, rank=4)
    gen = np.random.default_rng(11)
    x = gen.standard_normal((3, task.spec.m))

    def observer(t, adapter, record):
        gap = np.abs(forward(x, adapter) - x @ effective_weight(adapter)).max()
        assert gap <= 1e-6

    for build in (init_sorsa, init_pissa):
        train(build(task.w0, cfg.rank), task, cfg, observer=observer)


def test_trainable_parameter_counts():
    gen = np.random.default_rng(8)
    w0 = gen.standard_normal((10, 7))
    assert trainable_parameter_count(init_sorsa(w0, 3)) == 3 * (10 + 7 + 1)
    assert trainable_parameter_count(init_pissa(w0, 3)) == 3 * (10 + 7)
    assert trainable_parameter_count(init_lora(w0, 3, 0)) == 3 * (10 + 7)
    assert trainable_parameter_count(init_full(w0)) == 70


def test_checkpoint_round_trip_bitwise(tmp_path):
    gen = np.random.default_rng(9)
    w0 = gen.standard_normal((6, 5))
    adapters = {
        "sorsa": init_sorsa(w0, 2, seed=4),
        "pissa": init_pissa(w0, 2, seed=4),
        "lora": init_lora(w0, 2, seed=4),
        "full": init_full(w0, seed=4),
    }
    # make the trainable parts generic so the round trip is not trivially zero
    adapters["sorsa"].s_p += 0.125
    adapters["lora"].b += gen.standard_normal(adapters["lora"].b.shape)
    for kind, adapter in adapters.items():
        path = tmp_path / f"{kind}.ckpt"
        save_adapter(path, adapter)
        loaded = load_adapter(path)
        assert type(loaded) is type(adapter)
        assert np.array_equal(effective_weight(loaded), effective_weight(adapter))
        if isinstance(adapter, SorsaAdapter):
            assert np.array_equal(loaded.u_p, adapter.u_p)
            assert np.array_equal(loaded.s_p, adapter.s_p)
            assert np.array_equal(loaded.v_p, adapter.v_p)
            assert np.array_equal(loaded.w_r, adapter.w_r)
        if isinstance(adapter, FullAdapter):
            assert np.array_equal(loaded.w, adapter.w)
