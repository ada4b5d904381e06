from __future__ import annotations

import numpy as np
import pytest

from quadvuln.nn import model as M
from quadvuln.nn.optim import AdamState, adam_step
from test_gradcheck import tiny_setup


def test_zero_gradient_leaves_parameters_unchanged():
    params = {"w": np.array([1.5, -2.0])}
    out = adam_step(params, {"w": np.zeros(2)}, AdamState(lr=1e-3))
    assert out["w"].tolist() == [1.5, -2.0]


def test_first_step_on_unit_gradient():
    state = AdamState(lr=1e-3)
    out = adam_step({"w": np.array([0.0])}, {"w": np.array([1.0])}, state)
    # m_hat = 1, v_hat = 1 after bias correction
    assert abs(out["w"][0] - (-1e-3 / (1.0 + 1e-8))) <= 1e-18
    assert state.t == 1


def test_hand_computed_second_step():
    state = AdamState(lr=0.1)
    p = adam_step({"w": np.array([0.0])}, {"w": np.array([2.0])}, state)
    p = adam_step(p, {"w": np.array([-1.0])}, state)
    m = 0.9 * 0.2 + 0.1 * -1.0
    v = 0.999 * 0.004 + 0.001 * 1.0
    step2 = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    step1 = 0.1 * 2.0 / (2.0 + 1e-8)
    assert abs(p["w"][0] - (-step1 - step2)) <= 1e-15


def test_steps_are_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(3)
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
        state = AdamState(lr=1e-2)
        for _ in range(10):
            grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
            params = adam_step(params, grads, state)
        return params

    one, two = run(), run()
    assert all(np.array_equal(one[k], two[k]) for k in one)


def test_shape_mismatch_and_unknown_names():
    with pytest.raises(ValueError, match="shape"):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
    with pytest.raises(KeyError):
        adam_step({"w": np.zeros(2)}, {"x": np.zeros(2)}, AdamState())


def test_loss_decreases_on_a_fixed_batch():
    arch, _, batch, labels = tiny_setup(False, False)
    params = M.init_params(arch, np.random.default_rng(0))
    state = AdamState(lr=1e-3)
    losses = []
    for _ in range(6):
        loss, _, grads = M.loss_and_grads(batch, labels, params, arch)
        losses.append(loss)
        params = adam_step(params, grads, state)
    assert all(b < a for a, b in zip(losses, losses[1:]))
