import math

import numpy as np
import pytest

from memdec import rnn_decoder as rd
from memdec import surface_code_sim as sc
from memdec.errors import NumericError


def scalar_forward(params, events):
    """Independent loop-based oracle for the forward pass."""
    h = [0.0] * 16
    for t in range(events.shape[0]):
        x = [float(v) for v in events[t]] + h
        z = [sum(x[j] * params.w_rec[j, k] for j in range(20)) + params.b_rec[k]
             for k in range(16)]
        h = [max(v, 0.0) for v in z]
    return [sum(h[j] * params.w_eval[j, k] for j in range(16)) + params.b_eval[k]
            for k in range(2)]


def random_params(rng, scale=1.0):
    return rd.DecoderParams(
        rng.uniform(-scale, scale, (20, 16)),
        rng.uniform(-scale, scale, 16),
        rng.uniform(-scale, scale, (16, 2)),
        rng.uniform(-scale, scale, 2),
    )


class TestForward:
    def test_zero_params_zero_logits(self):
        trace = rd.forward(rd.DecoderParams.zeros(), np.zeros((4, 4)))
        assert np.array_equal(trace.logits, [0.0, 0.0])
        assert not trace.hidden.any()

    def test_bias_passthrough(self):
        params = rd.DecoderParams.zeros()
        params.b_eval[:] = (0.3, -0.3)
        trace = rd.forward(params, np.zeros((4, 4)))
        assert np.allclose(trace.logits, [0.3, -0.3])

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            params = random_params(rng)
            events = rng.integers(0, 2, size=(4, 4)).astype(np.float64)
            trace = rd.forward(params, events)
            assert np.allclose(trace.logits, scalar_forward(params, events),
                               rtol=1e-12, atol=1e-12)

    def test_one_hot_syndrome_oracle(self):
        rng = np.random.default_rng(3)
        params = random_params(rng)
        events = np.zeros((4, 4))
        events[0, 2] = 1.0
        trace = rd.forward(params, events)
        assert np.allclose(trace.logits, scalar_forward(params, events), rtol=1e-12)

    def test_forward_is_pure(self):
        rng = np.random.default_rng(8)
        params = random_params(rng)
        events = rng.integers(0, 2, size=(4, 4)).astype(np.uint8)
        a = rd.forward(params, events)
        b = rd.forward(params, events)
        assert np.array_equal(a.logits, b.logits)
        assert np.array_equal(a.hidden, b.hidden)
        assert np.array_equal(a.pre_activations, b.pre_activations)

    def test_relu_recurrence_shapes(self):
        rng = np.random.default_rng(9)
        params = random_params(rng)
        trace = rd.forward(params, rng.integers(0, 2, size=(4, 4)))
        assert trace.pre_activations.shape == (4, 16)
        assert trace.hidden.shape == (5, 16)
        assert np.array_equal(trace.hidden[1:], np.maximum(trace.pre_activations, 0))

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            rd.forward(rd.DecoderParams.zeros(), np.zeros((4, 5)))
        with pytest.raises(ValueError):
            rd.DecoderParams(np.zeros((19, 16)), np.zeros(16),
                             np.zeros((16, 2)), np.zeros(2))


class TestPredict:
    @pytest.mark.parametrize("b_eval,expected", [
        ((0.3, -0.3), 0),
        ((-1.0, 2.0), 1),
        ((0.5, 0.5), 0),   # tie resolves to "no error"
    ])
    def test_tie_rule(self, b_eval, expected):
        params = rd.DecoderParams.zeros()
        params.b_eval[:] = b_eval
        assert rd.predict(params, np.zeros((4, 4))) == expected

    def test_bias_shift_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            params = random_params(rng)
            events = rng.integers(0, 2, size=(6, 4, 4))
            base = rd.predict_batch(params, events)
            shifted = rd.DecoderParams(params.w_rec, params.b_rec, params.w_eval,
                                       params.b_eval + 0.7)
            assert np.array_equal(base, rd.predict_batch(shifted, events))


class TestLossAndGrads:
    def test_zero_params_uniform_loss(self):
        rng = np.random.default_rng(2)
        events = rng.integers(0, 2, size=(8, 4, 4))
        labels = rng.integers(0, 2, size=8)
        loss, _ = rd.loss_and_grads(rd.DecoderParams.zeros(), events, labels)
        assert math.isclose(loss, math.log(2), rel_tol=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            rd.loss_and_grads(rd.DecoderParams.zeros(),
                              np.zeros((0, 4, 4)), np.zeros(0))

    def test_duplicated_batch_equals_single(self):
        rng = np.random.default_rng(5)
        params = random_params(rng)
        events = rng.integers(0, 2, size=(1, 4, 4))
        labels = np.array([1])
        loss1, g1 = rd.loss_and_grads(params, events, labels)
        loss4, g4 = rd.loss_and_grads(params, np.repeat(events, 4, axis=0),
                                      np.repeat(labels, 4))
        assert math.isclose(loss1, loss4, rel_tol=1e-12)
        for a, b in zip(g1.tensors(), g4.tensors()):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(6)
        params = random_params(rng)
        events = rng.integers(0, 2, size=(16, 4, 4))
        labels = rng.integers(0, 2, size=16)
        perm = rng.permutation(16)
        loss_a, g_a = rd.loss_and_grads(params, events, labels)
        loss_b, g_b = rd.loss_and_grads(params, events[perm], labels[perm])
        assert math.isclose(loss_a, loss_b, rel_tol=1e-12)
        for a, b in zip(g_a.tensors(), g_b.tensors()):
            assert np.allclose(a, b, rtol=1e-10, atol=1e-13)

    def test_gradients_match_finite_differences(self):
        # 100 random draws; draws whose pre-activations sit within 1e-3 of the
        # ReLU kink are redrawn since central differences straddle the kink.
        rng = np.random.default_rng(1234)
        eps = 1e-4
        checked = 0
        while checked < 100:
            params = random_params(rng)
            events = rng.integers(0, 2, size=(1, 4, 4)).astype(np.float64)
            labels = rng.integers(0, 2, size=1)
            z, _, _ = rd.forward_batch(params, events)
            if np.abs(z).min() < 1e-3:
                continue
            checked += 1
            _, grads = rd.loss_and_grads(params, events, labels)
            for name in ("w_rec", "b_rec", "w_eval", "b_eval"):
                tensor = getattr(params, name)
                analytic = getattr(grads, name)
                it = np.nditer(tensor, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    orig = tensor[idx]
                    tensor[idx] = orig + eps
                    up, _ = rd.loss_and_grads(params, events, labels)
                    tensor[idx] = orig - eps
                    down, _ = rd.loss_and_grads(params, events, labels)
                    tensor[idx] = orig
                    fd = (up - down) / (2 * eps)
                    denom = max(abs(fd), abs(analytic[idx]), 0.1)
                    assert abs(fd - analytic[idx]) / denom < 1e-5, (name, idx)


class TestAdam:
    def test_zero_grads_keep_params(self):
        rng = np.random.default_rng(7)
        params = random_params(rng)
        out, state = rd.adam_step(params, rd.DecoderParams.zeros(),
                                  rd.AdamState(), rd.TrainConfig())
        assert state.step == 1
        for a, b in zip(out.tensors(), params.tensors()):
            assert np.array_equal(a, b)

    def test_first_step_hand_oracle(self):
        cfg = rd.TrainConfig()
        rng = np.random.default_rng(11)
        params = random_params(rng)
        grads = random_params(rng, scale=0.5)
        out, _ = rd.adam_step(params, grads, rd.AdamState(), cfg)
        # zero state: m_hat = g, v_hat = g^2 -> delta = -lr * g / (|g| + eps)
        for p, g, o in zip(params.tensors(), grads.tensors(), out.tensors()):
            expected = p - cfg.learning_rate * g / (np.abs(g) + cfg.adam_eps)
            assert np.allclose(o, expected, rtol=1e-12, atol=1e-15)

    def test_constant_grad_update_approaches_lr(self):
        cfg = rd.TrainConfig()
        params = rd.DecoderParams.zeros()
        grads = rd.DecoderParams.zeros()
        grads.b_eval[:] = 0.37
        state = rd.AdamState()
        prev = params.b_eval.copy()
        for _ in range(500):
            prev = params.b_eval.copy()
            params, state = rd.adam_step(params, grads, state, cfg)
        step_size = np.abs(params.b_eval - prev).max()
        assert math.isclose(step_size, cfg.learning_rate, rel_tol=0.02)

    def test_nonfinite_grads_raise(self):
        grads = rd.DecoderParams.zeros()
        grads.w_rec[0, 0] = np.nan
        with pytest.raises(NumericError):
            rd.adam_step(rd.DecoderParams.zeros(), grads,
                         rd.AdamState(), rd.TrainConfig())


class TestTraining:
    def test_constant_class_dataset_learned_in_one_epoch(self):
        train = sc.generate_dataset([0.0], 20000, 3, seed=31)
        val = sc.generate_dataset([0.0], 256, 3, seed=32, split_tag="validation")
        params = rd.train_fp(train, val, rd.TrainConfig(epochs=1, seed=17))
        assert rd.accuracy(params, train) >= 0.999

    def test_training_beats_majority_class(self):
        train = sc.generate_dataset([1e-3, 1e-2], 12000, 3, seed=33)
        val = sc.generate_dataset([1e-3, 1e-2], 2500, 3, seed=34, split_tag="validation")
        params = rd.train_fp(train, val, rd.TrainConfig(epochs=6, seed=18))
        majority = max(val.labels.mean(), 1 - val.labels.mean())
        assert rd.accuracy(params, val) > majority

    def test_same_seed_reproduces_params(self):
        train = sc.generate_dataset([1e-2], 2000, 3, seed=35)
        val = sc.generate_dataset([1e-2], 500, 3, seed=36, split_tag="validation")
        cfg = rd.TrainConfig(epochs=2, seed=19)
        a = rd.train_fp(train, val, cfg)
        b = rd.train_fp(train, val, cfg)
        for x, y in zip(a.tensors(), b.tensors()):
            assert np.array_equal(x, y)


class TestAccuracy:
    def test_zero_params_on_zero_label_data(self):
        ds = sc.generate_dataset([0.0], 50, 3, seed=37)
        assert rd.accuracy(rd.DecoderParams.zeros(), ds) == 1.0

    def test_single_wrong_sample(self):
        params = rd.DecoderParams.zeros()
        params.b_eval[:] = (1.0, 0.0)   # always predicts 0
        events = np.zeros((1, 4, 4))
        assert rd.accuracy(params, (events, np.array([1]))) == 0.0

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            rd.accuracy(rd.DecoderParams.zeros(), (np.zeros((0, 4, 4)), np.zeros(0)))
