import numpy as np
import pytest

from memdec import analog_model as am
from memdec import hwa_training as hwa
from memdec import rnn_decoder as rd
from memdec import surface_code_sim as sc


@pytest.fixture(scope="module")
def small_data():
    train = sc.generate_dataset([1e-3, 1e-2], 3000, 3, seed=61)
    val = sc.generate_dataset([1e-3, 1e-2], 600, 3, seed=62, split_tag="validation")
    return train, val


@pytest.fixture(scope="module")
def fp_params(small_data):
    train, val = small_data
    return rd.train_fp(train, val, rd.TrainConfig(epochs=4, seed=23))


class TestDropconnectMask:
    def test_keep_all_and_drop_all(self):
        rng = np.random.default_rng(0)
        assert hwa.dropconnect_mask((10, 10), 0.0, rng).all()
        assert not hwa.dropconnect_mask((10, 10), 1.0, rng).any()

    def test_drop_fraction(self):
        rng = np.random.default_rng(1)
        mask = hwa.dropconnect_mask((500, 200), 0.2, rng)
        dropped = 1.0 - mask.mean()
        assert abs(dropped - 0.2) < 0.01

    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            hwa.dropconnect_mask((2, 2), -0.1, np.random.default_rng(0))


class TestClipWeights:
    def test_huge_alpha_is_identity(self):
        rng = np.random.default_rng(2)
        params = rd.DecoderParams(rng.normal(size=(20, 16)), rng.normal(size=16),
                                  rng.normal(size=(16, 2)), rng.normal(size=2))
        out = hwa.clip_weights(params, 1e9)
        for a, b in zip(out.tensors(), params.tensors()):
            assert np.array_equal(a, b)

    def test_hand_computed_clip(self):
        params = rd.DecoderParams.zeros()
        params.w_eval[0, 0] = -3.0
        params.w_eval[1, 0] = 3.0
        pool = np.concatenate([params.w_eval.ravel(), params.b_eval.ravel()])
        sigma = pool.std()
        out = hwa.clip_weights(params, 0.5)
        bound = 0.5 * sigma
        assert bound < 3.0
        assert out.w_eval[0, 0] == -bound and out.w_eval[1, 0] == bound

    def test_degenerate_equal_layer_goes_to_zero(self):
        params = rd.DecoderParams.zeros()
        params.w_rec[:] = 2.0
        params.b_rec[:] = 2.0
        out = hwa.clip_weights(params, 3.0)
        assert not out.w_rec.any() and not out.b_rec.any()

    def test_fixed_bound_idempotence(self):
        rng = np.random.default_rng(3)
        params = rd.DecoderParams(rng.normal(size=(20, 16)), rng.normal(size=16),
                                  rng.normal(size=(16, 2)), rng.normal(size=2))
        pool = np.concatenate([params.w_rec.ravel(), params.b_rec.ravel()])
        bound = 1.0 * pool.std()
        once = np.clip(params.w_rec, -bound, bound)
        twice = np.clip(once, -bound, bound)
        assert np.array_equal(once, twice)

    def test_bad_alpha_rejected(self):
        with pytest.raises(ValueError):
            hwa.clip_weights(rd.DecoderParams.zeros(), 0.0)


class TestMaskedGradients:
    def test_masked_entries_get_zero_grads(self):
        rng = np.random.default_rng(4)
        params = rd.DecoderParams(rng.uniform(-1, 1, (20, 16)), rng.uniform(-1, 1, 16),
                                  rng.uniform(-1, 1, (16, 2)), rng.uniform(-1, 1, 2))
        masks = hwa._Masks.random(0.4, rng)
        events = rng.integers(0, 2, size=(8, 4, 4))
        labels = rng.integers(0, 2, size=8)
        _, grads = hwa.masked_loss_and_grads(params, masks, events, labels)
        for g, m in zip(grads.tensors(), masks.tensors()):
            assert not g[~m].any()

    def test_full_mask_matches_plain_gradients(self):
        rng = np.random.default_rng(5)
        params = rd.DecoderParams(rng.uniform(-1, 1, (20, 16)), rng.uniform(-1, 1, 16),
                                  rng.uniform(-1, 1, (16, 2)), rng.uniform(-1, 1, 2))
        events = rng.integers(0, 2, size=(8, 4, 4))
        labels = rng.integers(0, 2, size=8)
        loss_a, g_a = hwa.masked_loss_and_grads(params, hwa._Masks.full(),
                                                events, labels)
        loss_b, g_b = rd.loss_and_grads(params, events, labels)
        assert np.isclose(loss_a, loss_b, rtol=1e-12)
        for a, b in zip(g_a.tensors(), g_b.tensors()):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_surviving_grads_match_finite_differences(self):
        # noise disabled; kink-adjacent draws redrawn as in the plain FD check
        rng = np.random.default_rng(678)
        eps = 1e-4
        checked = 0
        while checked < 10:
            params = rd.DecoderParams(rng.uniform(-1, 1, (20, 16)),
                                      rng.uniform(-1, 1, 16),
                                      rng.uniform(-1, 1, (16, 2)),
                                      rng.uniform(-1, 1, 2))
            masks = hwa._Masks.random(0.3, rng)
            events = rng.integers(0, 2, size=(2, 4, 4)).astype(np.float64)
            labels = rng.integers(0, 2, size=2)
            eff = hwa._perturbed(params, masks, 0.0, None)
            z, _, _, _ = hwa._forward_hwa(eff, events, False)
            if np.abs(z).min() < 1e-3:
                continue
            checked += 1
            _, grads = hwa.masked_loss_and_grads(params, masks, events, labels)
            for name in ("w_rec", "b_rec", "w_eval", "b_eval"):
                tensor = getattr(params, name)
                mask = getattr(masks, name)
                analytic = getattr(grads, name)
                it = np.nditer(tensor, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    if not mask[idx]:
                        continue
                    orig = tensor[idx]
                    tensor[idx] = orig + eps
                    up, _ = hwa.masked_loss_and_grads(params, masks, events, labels)
                    tensor[idx] = orig - eps
                    down, _ = hwa.masked_loss_and_grads(params, masks, events, labels)
                    tensor[idx] = orig
                    fd = (up - down) / (2 * eps)
                    denom = max(abs(fd), abs(analytic[idx]), 0.1)
                    assert abs(fd - analytic[idx]) / denom < 1e-5, (name, idx)


class TestRetrainHwa:
    def test_all_techniques_off_behaves_like_fine_tuning(self, small_data, fp_params):
        train, val = small_data
        cfg = hwa.RetrainConfig(p_drop=0.0, noise_relative=0.0, epochs=2, seed=3)
        out = hwa.retrain_hwa(fp_params, train, val, cfg)
        base = rd.accuracy(fp_params, val)
        tuned = rd.accuracy(out, val)
        assert tuned >= base - 0.01

    def test_p_drop_one_rejected(self, small_data, fp_params):
        train, val = small_data
        with pytest.raises(ValueError):
            hwa.retrain_hwa(fp_params, train, val,
                            hwa.RetrainConfig(p_drop=1.0, epochs=1))

    def test_ds_mask_rejected(self, small_data, fp_params):
        train, val = small_data
        cfg = hwa.RetrainConfig(ds_mask=am.FaultMap.none(), epochs=1)
        with pytest.raises(ValueError):
            hwa.retrain_hwa(fp_params, train, val, cfg)

    def test_deterministic_given_seed(self, small_data, fp_params):
        train, val = small_data
        cfg = hwa.RetrainConfig(p_drop=0.1, epochs=1, seed=9)
        a = hwa.retrain_hwa(fp_params, train, val, cfg)
        b = hwa.retrain_hwa(fp_params, train, val, cfg)
        for x, y in zip(a.tensors(), b.tensors()):
            assert np.array_equal(x, y)

    def test_discretize_and_clip_paths_run(self, small_data, fp_params):
        train, val = small_data
        cfg = hwa.RetrainConfig(p_drop=0.1, io_discretize=True, clip_scale=4.0,
                                epochs=1, seed=5)
        out = hwa.retrain_hwa(fp_params, train, val, cfg)
        for w_name, b_name in (("w_rec", "b_rec"), ("w_eval", "b_eval")):
            pool = np.concatenate([getattr(out, w_name).ravel(),
                                   getattr(out, b_name).ravel()])
            assert np.abs(pool).max() <= 4.0 * pool.std() + 1e-12


class TestRetrainDs:
    def test_requires_mask(self, small_data, fp_params):
        train, val = small_data
        with pytest.raises(ValueError):
            hwa.retrain_ds(fp_params, train, val, hwa.RetrainConfig(epochs=1))

    def test_masked_positions_are_exact_zeros(self, small_data, fp_params):
        train, val = small_data
        fmap = am.FaultMap.sample(0.2, np.random.default_rng(31))
        cfg = hwa.RetrainConfig(ds_mask=fmap, epochs=2, seed=11)
        out = hwa.retrain_ds(fp_params, train, val, cfg)
        unit_rec = np.vstack([out.w_rec, out.b_rec[None, :]])
        unit_ev = np.vstack([out.w_eval, out.b_eval[None, :]])
        assert not unit_rec[fmap.recurrent].any()
        assert not unit_ev[fmap.evaluation].any()

    def test_digital_masking_equals_crossbar_cancellation(self, small_data, fp_params):
        # after DS retraining, analog inference on the matching fault map (no
        # other non-idealities) predicts identically to the digital decoder
        train, val = small_data
        fmap = am.FaultMap.sample(0.2, np.random.default_rng(32))
        cfg = hwa.RetrainConfig(ds_mask=fmap, epochs=1, seed=12, noise_relative=0.0)
        out = hwa.retrain_ds(fp_params, train, val, cfg)
        xcfg = am.CrossbarConfig(variability=am.VariabilityModel.disabled(),
                                 stuck_rate=0.0, quantize_io=False)
        programmed = am.program_decoder(out, xcfg, fmap, np.random.default_rng(33))
        digital = rd.predict_batch(out, val.events)
        analog = am.analog_forward_batch(programmed, xcfg, val.events)
        assert np.array_equal(digital, analog)

    def test_empty_mask_equals_hwa_without_dropconnect(self, small_data, fp_params):
        train, val = small_data
        cfg_ds = hwa.RetrainConfig(ds_mask=am.FaultMap.none(), epochs=1, seed=13)
        cfg_hwa = hwa.RetrainConfig(p_drop=0.0, epochs=1, seed=13)
        a = hwa.retrain_ds(fp_params, train, val, cfg_ds)
        b = hwa.retrain_hwa(fp_params, train, val, cfg_hwa)
        for x, y in zip(a.tensors(), b.tensors()):
            assert np.array_equal(x, y)

    def test_full_mask_is_degenerate_constant_predictor(self, small_data, fp_params):
        train, val = small_data
        fmap = am.FaultMap(np.ones((21, 16), bool), np.ones((17, 2), bool))
        cfg = hwa.RetrainConfig(ds_mask=fmap, epochs=1, seed=14)
        out = hwa.retrain_ds(fp_params, train, val, cfg)
        for t in out.tensors():
            assert not t.any()
        assert rd.predict_batch(out, val.events[:10]).max() == 0
