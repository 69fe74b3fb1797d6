"""Adam optimizer behavior, including the hand-stepped oracle trajectory."""
import numpy as np
import pytest

from vibfault.autodiff import Tensor
from vibfault.optim import Adam, clip_grad_norm

# Three Adam steps on f(t) = (t - 3)^2 from t0 = 0 with lr 0.1, computed by an
# independent plain-Python script (no numpy) and frozen here.
QUADRATIC_TRAJECTORY = [0.09999999983333335, 0.19989729258521102, 0.29961847654925267]


def test_first_step_moves_by_lr_times_sign():
    p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    before = p.data.copy()
    opt = Adam([p], learning_rate=1e-3)
    p.grad = np.array([0.3, -0.7, 4.0])
    opt.step()
    assert opt.t == 1
    delta = p.data - before
    np.testing.assert_allclose(delta, -1e-3 * np.sign([0.3, -0.7, 4.0]), rtol=1e-6)


def test_all_zero_gradients_leave_parameters_unchanged():
    p = Tensor(np.array([1.0, -4.0]), requires_grad=True)
    raw = p.data.tobytes()
    opt = Adam([p], learning_rate=0.5)
    for _ in range(3):
        p.grad = np.zeros(2)
        opt.step()
    assert p.data.tobytes() == raw


def test_zero_gradient_decays_moments_by_beta_factors():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], learning_rate=0.5)
    p.grad = np.array([2.0])
    opt.step()
    m1, v1 = opt.m[0].copy(), opt.v[0].copy()
    p.grad = np.array([0.0])
    opt.step()
    np.testing.assert_allclose(opt.m[0], 0.9 * m1, atol=1e-15)
    np.testing.assert_allclose(opt.v[0], 0.999 * v1, atol=1e-15)


def test_quadratic_matches_hand_stepped_oracle():
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], learning_rate=0.1)
    for expected in QUADRATIC_TRAJECTORY:
        p.grad = 2.0 * (p.data - 3.0)
        opt.step()
        np.testing.assert_allclose(p.data[0], expected, atol=1e-12)


def test_moments_zero_initialized_and_t_counts_steps():
    p = Tensor(np.zeros((2, 3)), requires_grad=True)
    opt = Adam([p])
    assert opt.t == 0
    assert np.all(opt.m[0] == 0) and np.all(opt.v[0] == 0)
    for k in range(1, 4):
        p.grad = np.ones((2, 3))
        opt.step()
        assert opt.t == k


def test_frozen_parameters_untouched_even_with_gradient():
    frozen = Tensor(np.array([1.0, 2.0]), requires_grad=False)
    live = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    raw = frozen.data.tobytes()
    opt = Adam([frozen, live], learning_rate=0.1)
    for _ in range(5):
        frozen.grad = np.array([10.0, -10.0])
        live.grad = np.array([10.0, -10.0])
        opt.step()
    assert frozen.data.tobytes() == raw
    assert not np.array_equal(live.data, np.array([1.0, 2.0]))


def test_gradient_shape_mismatch_rejected():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([p])
    p.grad = np.zeros(4)
    with pytest.raises(ValueError, match="shape"):
        opt.step()


def test_invalid_hyperparameters_rejected():
    p = Tensor(np.zeros(1), requires_grad=True)
    with pytest.raises(ValueError):
        Adam([p], learning_rate=0.0)
    with pytest.raises(ValueError):
        Adam([p], beta1=1.0)
    with pytest.raises(ValueError):
        Adam([p], epsilon=0.0)


def test_clip_grad_norm_scales_to_max():
    a = Tensor(np.zeros(2), requires_grad=True)
    b = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([3.0, 0.0])
    b.grad = np.array([0.0, 4.0])
    total = clip_grad_norm([a, b], max_norm=1.0)
    assert total == pytest.approx(5.0)
    joint = np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum())
    assert joint == pytest.approx(1.0)


def test_clip_grad_norm_leaves_small_gradients():
    a = Tensor(np.zeros(2), requires_grad=True)
    a.grad = np.array([0.1, 0.2])
    before = a.grad.copy()
    clip_grad_norm([a], max_norm=10.0)
    np.testing.assert_array_equal(a.grad, before)
