import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradcheck import mlp_gradient_error, penalty_gradient_error, random_net
from tabshift.nn import AdamState, Layer, Mlp, NoiseSpec, Tensor, adam_step, backward, forward, gradient_penalty, grad
from tabshift.nn import autograd as ag

mp.mp.dps = 40


def _identity_net(d):
    return Mlp([Layer(Tensor(np.eye(d), requires_grad=True), Tensor(np.zeros(d), requires_grad=True))])


def _linear_critic(w):
    w = np.asarray(w, dtype=float).reshape(-1, 1)
    return Mlp([Layer(Tensor(w, requires_grad=True), Tensor(np.zeros(1), requires_grad=True))])


class TestForward:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(4, 3))
        out, _ = forward(_identity_net(3), x)
        np.testing.assert_array_equal(out, x)

    def test_leaky_relu(self):
        assert ag.leaky_relu(Tensor([-1.0]), 0.2).value.tolist() == [-0.2]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(_identity_net(3), np.zeros((2, 4)))

    def test_non_finite_input(self):
        with pytest.raises(ValueError):
            forward(_identity_net(2), np.array([[np.nan, 0.0]]))

    def test_against_extended_precision(self):
        rng = np.random.default_rng(1)
        net = Mlp.build([4, 8, 8, 3], rng, hidden_activation="leaky_relu", batch_norm=True)
        x = rng.normal(size=(6, 4))
        out, _ = forward(net, x, "train")

        h = mp.matrix(x.tolist())
        for layer in net.layers:
            W, b = mp.matrix(layer.weight.value.tolist()), layer.bias.value
            z = h * W
            z = mp.matrix([[z[i, j] + mp.mpf(b[j]) for j in range(z.cols)] for i in range(z.rows)])
            if layer.batch_norm is not None:
                bn = layer.batch_norm
                for j in range(z.cols):
                    col = [z[i, j] for i in range(z.rows)]
                    mu = mp.fsum(col) / len(col)
                    var = mp.fsum((c - mu) ** 2 for c in col) / len(col)
                    for i in range(z.rows):
                        z[i, j] = (z[i, j] - mu) / mp.sqrt(var + mp.mpf(bn.eps)) * mp.mpf(bn.gamma.value[j]) + mp.mpf(
                            bn.beta.value[j]
                        )
            if layer.activation == "leaky_relu":
                z = z.apply(lambda v: v if v > 0 else v * mp.mpf(layer.slope))
            h = z
        ref = np.array(h.tolist(), dtype=float)
        assert np.max(np.abs(out - ref)) <= 1e-12

    def test_batchnorm_eval_is_rowwise_affine(self):
        rng = np.random.default_rng(2)
        net = Mlp.build([3, 5, 2], rng, batch_norm=True)
        forward(net, rng.normal(size=(10, 3)), "train")  # populate running stats
        x = rng.normal(size=(6, 3))
        full, _ = forward(net, x, "eval")
        single = np.vstack([forward(net, x[i : i + 1], "eval")[0] for i in range(6)])
        np.testing.assert_allclose(full, single, rtol=0, atol=1e-14)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8), st.floats(0.05, 5.0))
    def test_softmax_probability_vector(self, logits, tau):
        p = ag.softmax(Tensor(np.array([logits])), tau).value
        assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-9


class TestBackward:
    def test_linear_closed_form(self):
        x = np.random.default_rng(3).normal(size=(5, 3))
        out, tape = forward(_identity_net(3), x)
        gw, gb = backward(tape, np.full(out.shape, 1.0 / out.size))
        np.testing.assert_allclose(gw, np.tile(x.mean(axis=0)[:, None] / 3, (1, 3)), atol=1e-15)
        np.testing.assert_allclose(gb, np.full(3, 1.0 / 3), atol=1e-15)

    def test_zero_output_gradient(self):
        rng = np.random.default_rng(4)
        net = random_net(rng)
        out, tape = forward(net, rng.normal(size=(4, net.input_dim)))
        assert all(np.all(g == 0) for g in backward(tape, np.zeros_like(out)))

    def test_tape_single_use(self):
        out, tape = forward(_identity_net(2), np.ones((1, 2)))
        backward(tape, np.ones_like(out))
        with pytest.raises(RuntimeError):
            backward(tape, np.ones_like(out))

    @pytest.mark.parametrize("seed", range(8))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        assert mlp_gradient_error(random_net(rng), rng) <= 1e-4

    def test_second_order_of_cubic(self):
        x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
        y = (x * x * x).sum()
        (g,) = grad(y, [x], create_graph=True)
        (h,) = grad(g.sum(), [x])
        np.testing.assert_allclose(h, 6 * x.value)


class TestGradientPenalty:
    def test_unit_norm_linear_critic(self):
        w = np.array([0.6, 0.8])
        pen, grads = gradient_penalty(_linear_critic(w), np.ones((4, 2)), np.zeros((4, 2)), 10.0,
                                      np.random.default_rng(0))
        assert pen == pytest.approx(0.0, abs=1e-24)
        assert all(np.allclose(g, 0, atol=1e-12) for g in grads)

    def test_norm_three_linear_critic(self):
        w = np.array([3.0, 0.0, 0.0])
        pen, _ = gradient_penalty(_linear_critic(w), np.ones((5, 3)), -np.ones((5, 3)), 10.0, np.random.default_rng(1))
        assert pen == pytest.approx(40.0, rel=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_parameter_gradient_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        assert penalty_gradient_error(random_net(rng, critic=True), rng) <= 1e-3

    def test_batchnorm_critic_rejected(self):
        critic = Mlp.build([3, 4, 1], np.random.default_rng(0), batch_norm=True)
        with pytest.raises(ValueError):
            gradient_penalty(critic, np.zeros((2, 3)), np.ones((2, 3)), 10.0, np.random.default_rng(0))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            gradient_penalty(_linear_critic([1.0, 0.0]), np.zeros((2, 2)), np.zeros((3, 2)), 1.0,
                             np.random.default_rng(0))


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        p = [np.array([1.0, -2.0])]
        st_ = AdamState(lr=0.1)
        out, st_ = adam_step(p, [np.zeros(2)], st_)
        np.testing.assert_array_equal(out[0], p[0])
        assert st_.t == 1

    def test_first_step_is_lr(self):
        out, _ = adam_step([np.array([0.0])], [np.array([1.0])], AdamState(lr=0.1))
        assert out[0][0] == pytest.approx(-0.1, rel=1e-6)

    def test_non_finite_gradient_skipped(self):
        p = [np.array([1.0])]
        out, st_ = adam_step(p, [np.array([np.inf])], AdamState())
        assert out[0][0] == 1.0 and st_.skipped == 1 and st_.t == 0

    def test_two_steps_match_high_precision_trace(self):
        lr, b1, b2, eps = 2e-4, 0.5, 0.9, 1e-8
        p0 = np.array([0.3, -1.2, 2.0])
        gs = [np.array([0.5, -0.1, 3.0]), np.array([-0.2, 0.4, 1.0])]
        params, state = [p0.copy()], AdamState(lr, b1, b2, eps)
        for g in gs:
            params, state = adam_step(params, [g], state)

        ref = []
        for i in range(3):
            p, m, v = mp.mpf(p0[i]), mp.mpf(0), mp.mpf(0)
            for t, g in enumerate(gs, start=1):
                gi = mp.mpf(g[i])
                m = b1 * m + (1 - mp.mpf(b1)) * gi
                v = mp.mpf(b2) * v + (1 - mp.mpf(b2)) * gi * gi
                mhat, vhat = m / (1 - mp.mpf(b1) ** t), v / (1 - mp.mpf(b2) ** t)
                p = p - mp.mpf(lr) * mhat / (mp.sqrt(vhat) + mp.mpf(eps))
            ref.append(float(p))
        np.testing.assert_allclose(params[0], ref, rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step([np.zeros(2)], [np.zeros(3)], AdamState())


def test_noise_spec():
    assert NoiseSpec(4).draw(3, np.random.default_rng(0)).shape == (3, 4)
    with pytest.raises(ValueError):
        NoiseSpec(0)


def test_softmax_only_at_output():
    rng = np.random.default_rng(0)
    a = Layer(Tensor(rng.normal(size=(2, 3))), Tensor(np.zeros(3)), "softmax")
    b = Layer(Tensor(rng.normal(size=(3, 1))), Tensor(np.zeros(1)))
    with pytest.raises(ValueError):
        Mlp([a, b])
