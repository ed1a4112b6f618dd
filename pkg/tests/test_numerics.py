import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asal.numerics import (
    AdamState,
    LayerSpec,
    Mlp,
    NumericError,
    StateError,
    adam_step,
    entropy,
    linear_forward,
    softmax,
)

from conftest import central_diff, rel_err


class TestLinearForward:
    def test_identity_input(self):
        out = linear_forward(np.eye(2), [[2.0, 0.0], [0.0, 3.0]], [[0.0, 0.0]])
        assert np.array_equal(out, [[2.0, 0.0], [0.0, 3.0]])

    def test_zero_input_gives_bias_rows(self):
        out = linear_forward(np.zeros((3, 2)), np.ones((2, 2)), [[1.0, -1.0]])
        assert np.array_equal(out, np.tile([1.0, -1.0], (3, 1)))

    def test_identity_weights(self):
        out = linear_forward([[1.0, 2.0]], np.eye(2), [[0.5, 0.5]])
        assert np.allclose(out, [[1.5, 2.5]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="width"):
            linear_forward(np.ones((2, 3)), np.ones((2, 2)), [[0.0, 0.0]])
        with pytest.raises(ValueError, match="bias"):
            linear_forward(np.ones((2, 2)), np.ones((2, 2)), [[0.0]])


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        assert np.allclose(softmax([[0.0, 0.0, 0.0, 0.0]]), 0.25)

    def test_shift_invariance(self):
        for c in (-100.0, 0.0, 7.25):
            out = softmax([[c, c + np.log(3.0)]])
            assert np.allclose(out, [[0.25, 0.75]], atol=1e-12)

    def test_large_logits_do_not_overflow(self):
        out = softmax([[1000.0, 0.0]])
        assert np.isfinite(out).all()
        assert np.allclose(out, [[1.0, 0.0]])

    @given(st.lists(st.lists(st.floats(-500, 500), min_size=2, max_size=6),
                    min_size=1, max_size=5).filter(
        lambda rows: len({len(r) for r in rows}) == 1))
    @settings(max_examples=100, deadline=None)
    def test_rows_sum_to_one(self, rows):
        out = softmax(np.array(rows))
        assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-12)


class TestEntropy:
    def test_uniform_is_log_m(self):
        assert np.allclose(entropy([[0.25] * 4]), np.log(4), atol=1e-12)

    def test_one_hot_is_zero(self):
        assert entropy([[0.0, 1.0, 0.0]])[0, 0] == 0.0

    def test_fifty_fifty(self):
        assert np.allclose(entropy([[0.5, 0.5]]), np.log(2), atol=1e-12)

    def test_negative_probability_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            entropy([[1.1, -0.1]])

    @given(st.lists(st.floats(1e-9, 1.0), min_size=2, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_bounds(self, raw):
        p = np.array(raw) / sum(raw)
        h = entropy(p[None, :])[0, 0]
        assert -1e-12 <= h <= np.log(len(raw)) + 1e-12


def _random_mlp(rng, in_dim=4, out_dim=3):
    layers = [
        LayerSpec("linear", in_dim, 6),
        LayerSpec("tanh"),
        LayerSpec("linear", 6, 5),
        LayerSpec("leaky_relu"),
        LayerSpec("linear", 5, out_dim),
        LayerSpec("sigmoid"),
    ]
    return Mlp(layers, rng)


class TestBackward:
    def test_single_linear_layer_sum_loss(self, rng):
        mlp = Mlp([LayerSpec("linear", 3, 2)], rng)
        x = rng.standard_normal((5, 3))
        mlp.forward(x)
        grads, dx = mlp.backward(np.ones((5, 2)))
        dw, db = grads[0]
        assert np.allclose(dw, x.T @ np.ones((5, 2)))
        assert np.allclose(db, np.full((1, 2), 5.0))
        assert np.allclose(dx, np.ones((5, 2)) @ mlp.params[0][0].T)

    def test_matches_finite_differences(self, rng):
        mlp = _random_mlp(rng)
        x = rng.standard_normal((3, 4))
        target = rng.standard_normal((3, 3))

        out = mlp.forward(x)
        grads, dx = mlp.backward(2.0 * (out - target))
        flat_grads = [g for pair in grads for g in pair]

        checked = 0
        for pi, p in enumerate(mlp.flat_params()):
            def loss_of(arr, pi=pi):
                saved = p.copy()
                p[...] = arr
                val = float(((mlp.forward(x, cache=False) - target) ** 2).sum())
                p[...] = saved
                return val

            fd = central_diff(loss_of, p.copy())
            coords = list(np.ndindex(p.shape))
            rng.shuffle(coords)
            for coord in coords[:10]:
                assert rel_err(flat_grads[pi][coord], fd[coord]) <= 1e-4
                checked += 1
        assert checked >= 40

        # input gradient against finite differences too
        def loss_x(xa):
            return float(((mlp.forward(xa, cache=False) - target) ** 2).sum())

        fd_x = central_diff(loss_x, x.copy())
        assert (rel_err(dx, fd_x) <= 1e-4).all()

    def test_relu_blocks_negative_preactivation(self, rng):
        mlp = Mlp([LayerSpec("linear", 1, 1), LayerSpec("relu")], rng)
        mlp.params = [(np.array([[1.0]]), np.array([[-5.0]]))]  # pre-activation -5+x
        mlp.forward(np.array([[1.0]]))
        grads, dx = mlp.backward(np.array([[1.0]]))
        assert dx[0, 0] == 0.0
        assert grads[0][0][0, 0] == 0.0

    def test_backward_requires_cached_forward(self, rng):
        mlp = _random_mlp(rng)
        with pytest.raises(StateError):
            mlp.backward(np.ones((1, 3)))


def _scalar_adam_oracle(p, gs, alpha, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p = p - alpha * m_hat / (np.sqrt(v_hat) + eps)
    return p


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = [np.array([[1.0, 2.0]])]
        state = AdamState.fresh(p)
        out = adam_step(p, [np.zeros((1, 2))], state)
        assert np.array_equal(out[0], p[0])

    def test_single_step_hand_value(self):
        p = [np.array([[1.0]])]
        state = AdamState.fresh(p, alpha=0.1)
        out = adam_step(p, [np.array([[1.0]])], state)
        assert abs(out[0][0, 0] - 0.9) < 1e-8

    def test_two_steps_match_scalar_oracle(self):
        gs = [0.7, -0.3]
        p = [np.array([[1.5]])]
        state = AdamState.fresh(p, alpha=0.05)
        for g in gs:
            p = adam_step(p, [np.array([[g]])], state)
        expected = _scalar_adam_oracle(1.5, gs, alpha=0.05)
        assert abs(p[0][0, 0] - expected) <= 1e-12

    def test_nonfinite_gradient_rejected(self):
        p = [np.ones((1, 1))]
        state = AdamState.fresh(p)
        with pytest.raises(NumericError):
            adam_step(p, [np.array([[np.nan]])], state)

    def test_step_counter_increments(self):
        p = [np.ones((2, 2))]
        state = AdamState.fresh(p)
        for expected_t in (1, 2, 3):
            p = adam_step(p, [np.ones((2, 2))], state)
            assert state.t == expected_t


class TestDeterminism:
    def test_same_seed_same_weights(self):
        a = _random_mlp(np.random.default_rng(7))
        b = _random_mlp(np.random.default_rng(7))
        for (wa, ba), (wb, bb) in zip(a.params, b.params):
            assert np.array_equal(wa, wb)
            assert np.array_equal(ba, bb)

    def test_forward_reproducible(self, rng):
        mlp = _random_mlp(rng)
        x = np.random.default_rng(3).standard_normal((4, 4))
        assert np.array_equal(mlp.forward(x, cache=False), mlp.forward(x, cache=False))
