"""Optimizer steps: purity, hand-checked values, convergence."""

import numpy as np
import pytest

from labelattn.autodiff import Tensor
from labelattn.optim import adam_init, adam_step, sgd_step


class TestSgd:
    def test_direct_arithmetic(self):
        (out,) = sgd_step([Tensor(np.array([1.0]), requires_grad=True)],
                          [np.array([2.0])], lr=0.2)
        assert out.data[0] == pytest.approx(0.6, abs=1e-15)

    def test_zero_gradient_fixed_point(self):
        p = Tensor(np.array([1.5, -2.5]), requires_grad=True)
        (out,) = sgd_step([p], [np.zeros(2)], lr=0.3)
        assert np.array_equal(out.data, p.data)

    def test_does_not_mutate_inputs(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        snapshot = p.data.tobytes()
        sgd_step([p], [np.array([3.0, -1.0])], lr=0.1)
        assert p.data.tobytes() == snapshot

    def test_quadratic_descent(self):
        # one step on 0.5*(theta-3)^2 from theta=0 at lr 0.2
        theta = Tensor(np.array([0.0]), requires_grad=True)
        grad = theta.data - 3.0
        (theta2,) = sgd_step([theta], [grad], lr=0.2)
        assert theta2.data[0] == pytest.approx(0.6, abs=1e-15)
        loss0 = 0.5 * (theta.data[0] - 3) ** 2
        loss1 = 0.5 * (theta2.data[0] - 3) ** 2
        assert loss1 < loss0

    def test_rejects_bad_gradients(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        with pytest.raises(ValueError, match="non-finite"):
            sgd_step([p], [np.array([np.nan])], lr=0.1)
        with pytest.raises(ValueError, match="shape"):
            sgd_step([p], [np.zeros(2)], lr=0.1)


class TestAdam:
    def test_first_step_magnitude_is_lr(self):
        for scale in (1e-4, 1.0, 1e4):
            p = [Tensor(np.array([0.0]), requires_grad=True)]
            state = adam_init(p, lr=0.01)
            p2, state2 = adam_step(state, p, [np.array([scale])])
            assert abs(p2[0].data[0]) == pytest.approx(0.01, rel=1e-3)
            assert p2[0].data[0] < 0  # moves against the gradient
            assert state2.t == 1 and state.t == 0

    def test_zero_gradients_never_move_parameters(self):
        p = [Tensor(np.array([1.0, -1.0]), requires_grad=True)]
        state = adam_init(p, lr=0.1)
        for _ in range(100):
            p, state = adam_step(state, p, [np.zeros(2)])
        assert np.array_equal(p[0].data, [1.0, -1.0])

    def test_converges_on_quadratic(self):
        # 200 steps on 0.5*(theta-3)^2 from 0 at lr 0.1
        p = [Tensor(np.array([0.0]), requires_grad=True)]
        state = adam_init(p, lr=0.1)
        for _ in range(200):
            p, state = adam_step(state, p, [p[0].data - 3.0])
        assert abs(p[0].data[0] - 3.0) < 1e-3

    def test_does_not_mutate_inputs(self):
        p = [Tensor(np.array([1.0, 2.0]), requires_grad=True)]
        state = adam_init(p, lr=0.1)
        p_bytes = p[0].data.tobytes()
        m_bytes = state.m[0].tobytes()
        adam_step(state, p, [np.array([0.5, -0.5])])
        assert p[0].data.tobytes() == p_bytes
        assert state.m[0].tobytes() == m_bytes and state.t == 0

    def test_step_counter_increases(self):
        p = [Tensor(np.array([0.0]), requires_grad=True)]
        state = adam_init(p, lr=0.1)
        for expected in (1, 2, 3):
            p, state = adam_step(state, p, [np.array([1.0])])
            assert state.t == expected
