"""Tests for the optimizer, schedule, losses, and train loop.

The Adam update and both losses are checked against independent
re-derivations (hand-computed closed forms, scipy's log-softmax); the
schedule against its endpoint/extremum identities and a provable
step-to-step continuity bound.
"""

import math

import numpy as np
import pytest
import scipy.special

from lrukit import (
    DivergenceError,
    OptimConfig,
    TrainTask,
    finite_difference_check,
    make_generator,
    sequence_mse,
    softmax_cross_entropy,
    train_loop,
)
from lrukit.training import (
    adamw_step,
    init_train_state,
    is_recurrent_param,
    lr_schedule,
    max_eigen_magnitude,
)


def _optim(**overrides):
    base = dict(base_lr=1e-3, total_steps=100)
    base.update(overrides)
    return OptimConfig(**base)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_optim_config_validation():
    cases = [
        dict(base_lr=0.0),
        dict(total_steps=-1),
        dict(lr_factor=0.0),
        dict(lr_factor=1.5),
        dict(weight_decay=-0.1),
        dict(betas=(0.9, 1.0)),
        dict(betas=(0.0, 0.999)),
        dict(eps=0.0),
        dict(warmup_frac=1.5),
        dict(schedule="linear"),
    ]
    for bad in cases:
        with pytest.raises(ValueError):
            _optim(**bad)


def test_optim_config_round_trip():
    cfg = _optim(lr_factor=0.25, weight_decay=0.05, schedule="constant")
    restored = OptimConfig.from_dict(cfg.to_dict())
    assert restored == cfg
    assert isinstance(restored.betas, tuple)


# ---------------------------------------------------------------------------
# Parameter grouping
# ---------------------------------------------------------------------------

def test_recurrent_group_membership():
    cfg = _optim()
    for name in ("nu_log", "gamma_log", "b_re", "b_im"):
        assert is_recurrent_param(name, cfg)
        assert is_recurrent_param(f"blocks.3.lru.{name}", cfg)
    for name in ("c_re", "c_im", "head.w", "encoder.b", "norm_scale", "glu_w2"):
        assert not is_recurrent_param(name, cfg)


def test_theta_and_d_group_flags():
    default = _optim()
    assert is_recurrent_param("theta_log", default)
    assert not is_recurrent_param("d", default)
    flipped = _optim(theta_in_recurrent_group=False, d_in_recurrent_group=True)
    assert not is_recurrent_param("blocks.0.lru.theta_log", flipped)
    assert is_recurrent_param("blocks.0.lru.d", flipped)


# ---------------------------------------------------------------------------
# Adam update: closed forms
# ---------------------------------------------------------------------------

def test_first_step_matches_closed_form():
    cfg = _optim(base_lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    state = init_train_state({"w": np.array([2.0])})
    g = np.array([0.5])
    adamw_step(state, {"w": g}, cfg, lr=0.1)
    # After bias correction the first step is lr * g / (|g| + eps).
    expected = 2.0 - 0.1 * 0.5 / (0.5 + 1e-8)
    assert state.params["w"][0] == pytest.approx(expected, rel=1e-12)
    assert state.step == 1


def test_two_steps_match_hand_rolled_adam():
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.05
    cfg = _optim(base_lr=lr, betas=(b1, b2), eps=eps)
    state = init_train_state({"w": np.array([1.0, -2.0])})
    grads = [np.array([0.3, -0.7]), np.array([-0.2, 0.4])]

    p = np.array([1.0, -2.0])
    m = np.zeros(2)
    v = np.zeros(2)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        adamw_step(state, {"w": g}, cfg, lr=lr)
    np.testing.assert_allclose(state.params["w"], p, rtol=1e-14)
    assert state.step == 2


def test_weight_decay_is_decoupled_and_skips_recurrent_group():
    lr, wd = 0.01, 0.1
    cfg = _optim(base_lr=lr, weight_decay=wd, lr_factor=0.5)
    w0, nu0 = 3.0, -1.0
    state = init_train_state(
        {"head.w": np.array([w0]), "blocks.0.lru.nu_log": np.array([nu0])}
    )
    g = np.array([1.0])
    adamw_step(state, {"head.w": g, "blocks.0.lru.nu_log": g}, cfg, lr=lr)
    adam = 1.0 / (1.0 + 1e-8)
    # General group: full lr, then decay applied to the updated value.
    expected_w = (w0 - lr * adam) * (1.0 - lr * wd)
    # Recurrent group: reduced lr, no decay.
    expected_nu = nu0 - lr * 0.5 * adam
    assert state.params["head.w"][0] == pytest.approx(expected_w, rel=1e-12)
    assert state.params["blocks.0.lru.nu_log"][0] == pytest.approx(
        expected_nu, rel=1e-12
    )


def test_rejected_step_leaves_state_untouched():
    cfg = _optim()
    state = init_train_state({"w": np.array([1.0]), "b": np.array([2.0])})
    with pytest.raises(DivergenceError):
        adamw_step(state, {"w": np.array([np.nan]), "b": np.array([0.1])}, cfg, 1e-3)
    assert state.step == 0
    assert state.params["w"][0] == 1.0 and state.params["b"][0] == 2.0
    assert np.all(state.m["b"] == 0.0) and np.all(state.v["b"] == 0.0)


def test_missing_gradient_raises():
    cfg = _optim()
    state = init_train_state({"w": np.array([1.0]), "b": np.array([2.0])})
    with pytest.raises(ValueError, match="missing gradients"):
        adamw_step(state, {"w": np.array([0.1])}, cfg, 1e-3)


def test_state_validate():
    state = init_train_state({"w": np.zeros(3)})
    state.validate()
    state.m["extra"] = np.zeros(1)
    with pytest.raises(ValueError, match="buffers"):
        state.validate()


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------

def test_constant_schedule():
    cfg = _optim(base_lr=3e-4, schedule="constant")
    assert all(lr_schedule(s, cfg) == 3e-4 for s in (0, 50, 100))


def test_warmup_cosine_endpoints_and_peak():
    cfg = _optim(base_lr=1e-2, total_steps=200, warmup_frac=0.1)
    warmup = round(0.1 * 200)
    assert lr_schedule(0, cfg) == pytest.approx(1e-7)
    assert lr_schedule(warmup, cfg) == pytest.approx(1e-2)
    assert lr_schedule(200, cfg) == pytest.approx(1e-7, abs=1e-15)
    mid = warmup + (200 - warmup) // 2
    assert lr_schedule(mid, cfg) == pytest.approx(1e-7 + (1e-2 - 1e-7) / 2, rel=1e-6)


def test_schedule_rises_then_falls():
    cfg = _optim(base_lr=5e-3, total_steps=120, warmup_frac=0.25)
    warmup = round(0.25 * 120)
    values = [lr_schedule(s, cfg) for s in range(121)]
    assert all(b > a for a, b in zip(values[:warmup], values[1 : warmup + 1]))
    assert all(
        b < a for a, b in zip(values[warmup:-1], values[warmup + 1 :])
    )
    assert max(values) == values[warmup]


def test_schedule_continuity_bound():
    cfg = _optim(base_lr=1e-2, total_steps=100, warmup_frac=0.1)
    warmup = round(0.1 * 100)
    span = 1e-2 - 1e-7
    bound = max(span / warmup, 0.5 * math.pi * span / (100 - warmup))
    values = [lr_schedule(s, cfg) for s in range(101)]
    jumps = [abs(b - a) for a, b in zip(values, values[1:])]
    assert max(jumps) <= bound * (1.0 + 1e-12)


def test_schedule_rejects_out_of_range_step():
    cfg = _optim()
    with pytest.raises(ValueError, match="step"):
        lr_schedule(-1, cfg)
    with pytest.raises(ValueError, match="step"):
        lr_schedule(101, cfg)


def test_full_warmup_edge_case():
    cfg = _optim(base_lr=1e-3, total_steps=10, warmup_frac=1.0)
    assert lr_schedule(10, cfg) == pytest.approx(1e-3)
    assert lr_schedule(0, cfg) == pytest.approx(1e-7)


# ---------------------------------------------------------------------------
# Eigenvalue telemetry
# ---------------------------------------------------------------------------

def test_max_eigen_magnitude():
    params = {
        "blocks.0.lru.nu_log": np.log(np.array([0.1, 0.5])),
        "blocks.1.lru.nu_log": np.log(np.array([0.05])),
        "head.w": np.zeros((2, 2)),
    }
    # |lambda| = exp(-nu); the largest comes from the smallest nu.
    assert max_eigen_magnitude(params) == pytest.approx(math.exp(-0.05))
    assert max_eigen_magnitude({"head.w": np.zeros(2)}) is None


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def test_sequence_mse_value_and_gradient():
    rng = make_generator(0)
    pred = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 4))
    loss, grad = sequence_mse(pred, target)
    assert loss == pytest.approx(float(np.mean((pred - target) ** 2)), rel=1e-14)
    np.testing.assert_allclose(grad, 2.0 * (pred - target) / pred.size, rtol=1e-14)
    with pytest.raises(ValueError, match="shape"):
        sequence_mse(pred, target[:2])

    def closure(flat):
        value, g = sequence_mse(flat["p"], target)
        return value, {"p": g}

    assert finite_difference_check(closure, {"p": pred}).passed(1e-7)


def test_softmax_cross_entropy_matches_scipy():
    rng = make_generator(1)
    logits = rng.normal(size=(5, 4)) * 3.0
    labels = rng.integers(0, 4, size=5)
    loss, grad = softmax_cross_entropy(logits, labels)
    log_probs = scipy.special.log_softmax(logits, axis=1)
    expected = -np.mean(log_probs[np.arange(5), labels])
    assert loss == pytest.approx(float(expected), rel=1e-12)
    onehot = np.eye(4)[labels]
    np.testing.assert_allclose(
        grad, (scipy.special.softmax(logits, axis=1) - onehot) / 5, rtol=1e-10
    )


def test_softmax_cross_entropy_is_shift_invariant_and_stable():
    logits = np.array([[1000.0, 1000.0 - 5.0], [-1000.0, -995.0]])
    loss, grad = softmax_cross_entropy(logits, np.array([0, 1]))
    assert math.isfinite(loss) and np.all(np.isfinite(grad))
    shifted_loss, _ = softmax_cross_entropy(logits + 123.4, np.array([0, 1]))
    assert shifted_loss == pytest.approx(loss, rel=1e-12)


def test_softmax_cross_entropy_gradient_finite_differences():
    rng = make_generator(2)
    logits = rng.normal(size=(3, 5))
    labels = np.array([4, 0, 2])

    def closure(flat):
        value, g = softmax_cross_entropy(flat["z"], labels)
        return value, {"z": g}

    assert finite_difference_check(closure, {"z": logits}).passed(1e-7)


def test_softmax_cross_entropy_validation():
    with pytest.raises(ValueError, match="logits"):
        softmax_cross_entropy(np.zeros(3), np.array([0]))
    with pytest.raises(ValueError, match="labels"):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 1, 2]))


# ---------------------------------------------------------------------------
# Train loop
# ---------------------------------------------------------------------------

def _quadratic_task(target=3.0, noise=0.0):
    def value_and_grad(params, rng):
        w = params["w"]
        jitter = noise * rng.normal(size=w.shape) if noise else 0.0
        diff = w - target + jitter
        return float(np.sum(diff * diff)), {"w": 2.0 * diff}

    return TrainTask(
        name="quadratic",
        params={"w": np.array([0.0])},
        value_and_grad=value_and_grad,
        config={"target": target},
    )


def test_train_loop_converges_on_quadratic():
    optim = OptimConfig(base_lr=0.2, total_steps=150, schedule="constant")
    report, state = train_loop(_quadratic_task(), optim, seed=0)
    assert state.params["w"][0] == pytest.approx(3.0, abs=1e-2)
    assert report.metrics["final_loss"] < 1e-3
    assert report.metrics["diverged"] is False
    assert report.metrics["steps_run"] == 150


def test_train_loop_rows_trace_loss_before_update():
    optim = OptimConfig(base_lr=0.1, total_steps=10, schedule="constant")
    report, _ = train_loop(_quadratic_task(), optim, seed=0, log_every=3)
    steps = [row["step"] for row in report.rows]
    assert steps == [0, 3, 6, 9, 10]
    assert report.rows[0]["loss"] == pytest.approx(9.0)  # (0 - 3)^2 pre-update
    assert all(set(row) == {"step", "loss", "lr", "max_abs_eigen"}
               for row in report.rows)
    assert all(row["max_abs_eigen"] is None for row in report.rows)


def test_train_loop_is_deterministic_per_seed():
    optim = OptimConfig(base_lr=0.05, total_steps=40, schedule="constant")
    r1, _ = train_loop(_quadratic_task(noise=0.5), optim, seed=7)
    r2, _ = train_loop(_quadratic_task(noise=0.5), optim, seed=7)
    r3, _ = train_loop(_quadratic_task(noise=0.5), optim, seed=8)
    assert r1.rows == r2.rows
    assert r1.rows != r3.rows


def test_train_loop_flags_non_finite_loss():
    calls = {"n": 0}

    def explode(params, rng):
        calls["n"] += 1
        if calls["n"] >= 4:
            return math.inf, {"w": np.zeros(1)}
        return 1.0, {"w": np.ones(1)}

    task = TrainTask(name="explode", params={"w": np.zeros(1)}, value_and_grad=explode)
    optim = OptimConfig(base_lr=0.1, total_steps=20, schedule="constant")
    report, state = train_loop(task, optim, seed=0)
    assert report.metrics["diverged"] is True
    assert report.metrics["steps_run"] == 3
    assert not math.isfinite(report.metrics["final_loss"])


def test_train_loop_flags_non_finite_gradient():
    def bad_grad(params, rng):
        return 1.0, {"w": np.array([np.nan])}

    task = TrainTask(name="nan-grad", params={"w": np.zeros(1)}, value_and_grad=bad_grad)
    optim = OptimConfig(base_lr=0.1, total_steps=5, schedule="constant")
    report, state = train_loop(task, optim, seed=0)
    assert report.metrics["diverged"] is True
    assert report.metrics["steps_run"] == 0
    assert state.params["w"][0] == 0.0  # rejected before any buffer write


def test_train_loop_tracks_eigen_magnitudes():
    def value_and_grad(params, rng):
        return float(params["lru.nu_log"].sum()), {
            "lru.nu_log": np.ones_like(params["lru.nu_log"])
        }

    task = TrainTask(
        name="eigen",
        params={"lru.nu_log": np.log(np.array([0.2]))},
        value_and_grad=value_and_grad,
    )
    optim = OptimConfig(base_lr=0.01, total_steps=3, schedule="constant")
    report, state = train_loop(task, optim, seed=0)
    assert report.rows[0]["max_abs_eigen"] == pytest.approx(math.exp(-0.2))
    # nu_log decreases each step (positive gradient), so |lambda| grows.
    eigens = [row["max_abs_eigen"] for row in report.rows]
    assert eigens == sorted(eigens)
    assert report.metrics["max_abs_eigen"] == pytest.approx(eigens[-1])


def test_train_loop_rejects_bad_log_every():
    optim = OptimConfig(base_lr=0.1, total_steps=5, schedule="constant")
    with pytest.raises(ValueError, match="log_every"):
        train_loop(_quadratic_task(), optim, seed=0, log_every=0)
