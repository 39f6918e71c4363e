"""Optimizers, the warmup/decay schedule, and the proximal penalty."""
import numpy as np
import pytest

from fedtext.models import LossGrad
from fedtext.optim import (
    OptimizerState,
    ProximalTerm,
    Schedule,
    apply_step,
    init_optimizer,
    lr_at,
    proximal_augment,
)
from fedtext.params import ParamVector

LAYOUT = {"a": (0, 2), "b": (2, 1)}


def vec(values):
    return ParamVector(np.asarray(values, dtype=float), LAYOUT)


# ---------------------------------------------------------------------------
# sgd / adam updates

def test_sgd_step_is_exact():
    state = init_optimizer("sgd", vec([1.0, 2.0, 3.0]))
    w = vec([1.0, 2.0, 3.0])
    g = vec([0.5, -1.0, 0.0])
    state2, w2 = apply_step(state, w, g, 0.1)
    assert np.allclose(w2.values, [0.95, 2.1, 3.0], atol=1e-15)
    assert state2.step_count == 1


def test_adam_first_step_moves_lr_times_sign():
    # from zero state: m_hat = g, v_hat = g^2, delta = -lr * g / (|g| + eps)
    w = vec([0.0, 0.0, 0.0])
    g = vec([0.3, -0.2, 0.0])
    state = init_optimizer("adam", w)
    _, w2 = apply_step(state, w, g, 0.1)
    eps = state.eps
    expect = -0.1 * np.array([0.3, -0.2, 0.0]) / (np.abs([0.3, -0.2, 0.0]) + eps)
    assert np.allclose(w2.values, expect, atol=1e-15)
    # zero-gradient coordinate does not move
    assert w2.values[2] == 0.0


def test_adam_is_scale_invariant_for_large_gradients():
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=3) for _ in range(5)]
    trajs = []
    for scale in (1.0, 100.0):
        w = vec([0.0, 0.0, 0.0])
        state = init_optimizer("adam", w)
        for g in grads:
            state, w = apply_step(state, w, vec(scale * g), 0.05)
        trajs.append(w.values.copy())
    assert np.allclose(trajs[0], trajs[1], atol=1e-6)


def test_apply_step_is_functional():
    w = vec([1.0, 1.0, 1.0])
    state = init_optimizer("adam", w)
    g = vec([1.0, 1.0, 1.0])
    state2, w2 = apply_step(state, w, g, 0.1)
    assert state.step_count == 0  # original untouched
    assert np.all(state.m == 0.0)
    assert state2.step_count == 1
    assert np.all(w.values == 1.0)
    assert not np.allclose(w2.values, w.values)


def test_apply_step_rejects_non_finite_gradient_naming_segment():
    w = vec([0.0, 0.0, 0.0])
    g = vec([0.0, 0.0, np.nan])
    state = init_optimizer("sgd", w)
    with pytest.raises(ValueError, match="'b'"):
        apply_step(state, w, g, 0.1)


def test_apply_step_rejects_negative_lr():
    w = vec([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        apply_step(init_optimizer("sgd", w), w, w.zeros_like(), -0.1)


def test_init_optimizer_rejects_unknown_kind():
    with pytest.raises(ValueError):
        init_optimizer("momentum", vec([0.0, 0.0, 0.0]))


def test_optimizer_state_rejects_unknown_kind():
    with pytest.raises(ValueError):
        OptimizerState(kind="rmsprop")


# ---------------------------------------------------------------------------
# learning-rate schedule

def test_schedule_warmup_then_linear_decay():
    s = Schedule(base_lr=1.0, warmup_steps=10, total_steps=100)
    assert lr_at(s, 0) == 0.0
    assert lr_at(s, 5) == pytest.approx(0.5)
    assert lr_at(s, 10) == pytest.approx(1.0)  # both branches agree here
    assert lr_at(s, 55) == pytest.approx(0.5)
    assert lr_at(s, 100) == 0.0
    assert lr_at(s, 101) == 0.0
    assert lr_at(s, 10_000) == 0.0


def test_schedule_is_continuous_at_the_warmup_boundary():
    s = Schedule(base_lr=0.3, warmup_steps=7, total_steps=50)
    before = lr_at(s, 6)
    peak = lr_at(s, 7)
    after = lr_at(s, 8)
    assert before < peak
    assert after < peak
    assert peak == pytest.approx(0.3)


def test_schedule_without_warmup():
    s = Schedule(base_lr=0.2, warmup_steps=0, total_steps=4)
    assert lr_at(s, 0) == pytest.approx(0.2)
    assert lr_at(s, 2) == pytest.approx(0.1)
    assert lr_at(s, 4) == 0.0


def test_schedule_rejects_bad_arguments():
    with pytest.raises(ValueError):
        Schedule(base_lr=-0.1, warmup_steps=0, total_steps=10)
    with pytest.raises(ValueError):
        Schedule(base_lr=0.1, warmup_steps=11, total_steps=10)
    with pytest.raises(ValueError):
        lr_at(Schedule(base_lr=0.1, warmup_steps=0, total_steps=10), -1)


# ---------------------------------------------------------------------------
# proximal term

def test_proximal_mu_zero_returns_input_unchanged():
    w = vec([1.0, 2.0, 3.0])
    lg = LossGrad(loss=1.5, grad=vec([0.1, 0.2, 0.3]))
    out = proximal_augment(lg, w, ProximalTerm(0.0, w.zeros_like()))
    assert out is lg


def test_proximal_penalty_value_and_gradient():
    anchor = vec([0.0, 0.0, 0.0])
    w = vec([1.0, -2.0, 2.0])
    lg = LossGrad(loss=1.0, grad=vec([0.0, 0.0, 0.0]))
    out = proximal_augment(lg, w, ProximalTerm(0.5, anchor))
    # penalty = (mu/2) * ||w - anchor||^2 = 0.25 * 9
    assert out.loss == pytest.approx(1.0 + 0.25 * 9.0)
    assert np.allclose(out.grad.values, 0.5 * np.array([1.0, -2.0, 2.0]))


def test_proximal_gradient_pulls_towards_anchor():
    anchor = vec([0.0, 0.0, 0.0])
    w = vec([4.0, -4.0, 4.0])
    state = init_optimizer("sgd", w)
    prox = ProximalTerm(1.0, anchor)
    for _ in range(20):
        lg = proximal_augment(LossGrad(0.0, w.zeros_like()), w, prox)
        state, w = apply_step(state, w, lg.grad, 0.1)
    assert np.linalg.norm(w.values) < np.linalg.norm([4.0, -4.0, 4.0])


def test_proximal_rejects_negative_mu():
    with pytest.raises(ValueError):
        ProximalTerm(-0.1, vec([0.0, 0.0, 0.0]))


def test_proximal_rejects_layout_mismatch():
    w = vec([1.0, 2.0, 3.0])
    other = ParamVector(np.zeros(3), {"z": (0, 3)})
    lg = LossGrad(loss=0.0, grad=w.zeros_like())
    with pytest.raises(ValueError):
        proximal_augment(lg, w, ProximalTerm(0.5, other))
