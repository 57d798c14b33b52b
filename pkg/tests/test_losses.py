"""Training objectives: closed-form values, composition, gradient flow."""

import numpy as np
import pytest

from wolonet.dsp import MelConfig
from wolonet.losses import (LossWeights, adv_d_loss, adv_g_loss,
                            feature_matching_loss, mel_loss, total_d_loss,
                            total_g_loss)
from wolonet.tensor import ShapeMismatchError, Tensor, no_grad


def _outs(scores, feats_per=()):
    """Build (score, feature_list) pairs from plain arrays."""
    return [(Tensor(np.asarray(s, dtype=np.float64)),
             [Tensor(np.asarray(f, dtype=np.float64)) for f in fs])
            for s, fs in zip(scores, feats_per or [[] for _ in scores])]


class TestClosedForms:
    def test_perfect_discriminator_zero_loss(self):
        real = _outs([np.ones((2, 5)), np.ones(3)])
        fake = _outs([np.zeros((2, 5)), np.zeros(3)])
        assert adv_d_loss(real, fake).item() == 0.0

    def test_lsgan_fixed_point_values(self):
        # all scores 1/2: each of n discriminators contributes
        # (1/2)^2 + (1/2)^2 = 1/2 to D and (1/2)^2 = 1/4 to G, exactly
        for n in (1, 5, 8):
            half = [np.full((3, 4), 0.5)] * n
            assert adv_d_loss(_outs(half), _outs(half)).item() == n / 2
            assert adv_g_loss(_outs(half)).item() == n / 4

    def test_adv_values_reduce_by_mean_then_sum(self):
        real = _outs([np.array([1.0, 0.0])])   # mean[(s-1)^2] = 1/2
        fake = _outs([np.array([0.5, 0.5])])   # mean[s^2] = 1/4
        assert adv_d_loss(real, fake).item() == pytest.approx(0.75)
        assert adv_g_loss(fake).item() == pytest.approx(0.25)

    def test_feature_matching_delta_closed_form(self):
        base = np.arange(12.0).reshape(3, 4)
        fr = [[base, base + 2.0]]
        ff = [[base, base]]
        out = feature_matching_loss(_outs([np.zeros(1)], fr),
                                    _outs([np.zeros(1)], ff))
        assert out.item() == pytest.approx(2.0)  # 0 + mean|2| summed

    def test_feature_matching_sums_over_discriminators(self):
        a, b = np.zeros((2, 2)), np.ones((2, 2))
        out = feature_matching_loss(
            _outs([np.zeros(1), np.zeros(1)], [[a], [a]]),
            _outs([np.zeros(1), np.zeros(1)], [[b], [b]]))
        assert out.item() == pytest.approx(2.0)

    def test_mel_loss_identical_waves_is_zero(self):
        cfg = MelConfig()
        x = Tensor(np.random.default_rng(0).uniform(-0.5, 0.5, 4096))
        assert mel_loss(x, x, cfg).item() == 0.0

    def test_mel_loss_scaling_offset(self):
        # doubling one waveform shifts every unfloored log-mel bin by ln 2
        cfg = MelConfig()
        rng = np.random.default_rng(1)
        x = rng.uniform(-0.4, 0.4, 4096)
        with no_grad():
            val = mel_loss(Tensor(x), Tensor(2.0 * x), cfg).item()
        assert abs(val - np.log(2.0)) < 1e-3  # a few floored bins at most


class TestComposition:
    def test_total_g_loss_combines_terms(self):
        cfg = MelConfig()
        rng = np.random.default_rng(2)
        wave_r = Tensor(rng.uniform(-0.5, 0.5, 4096))
        wave_f = Tensor(rng.uniform(-0.5, 0.5, 4096))
        feats_r = [[rng.standard_normal((2, 3))]]
        feats_f = [[rng.standard_normal((2, 3))]]
        fake = _outs([rng.standard_normal(4)], feats_f)
        real = _outs([rng.standard_normal(4)], feats_r)
        weights = LossWeights(lambda_fm=2.0, lambda_mel=45.0)
        total, parts = total_g_loss(fake, real, wave_r, wave_f, weights, cfg)
        assert set(parts) == {"adv", "fm", "mel"}
        want = parts["adv"] + 2.0 * parts["fm"] + 45.0 * parts["mel"]
        assert total.item() == pytest.approx(want, rel=1e-12)
        assert parts["adv"] == pytest.approx(adv_g_loss(fake).item())

    def test_custom_weights_respected(self):
        cfg = MelConfig()
        rng = np.random.default_rng(3)
        wave = Tensor(rng.uniform(-0.5, 0.5, 4096))
        fake = _outs([np.full(2, 0.5)], [[np.zeros((2, 2))]])
        real = _outs([np.full(2, 0.5)], [[np.ones((2, 2))]])
        total, parts = total_g_loss(fake, real, wave, wave,
                                    LossWeights(lambda_fm=7.0,
                                                lambda_mel=0.0), cfg)
        assert total.item() == pytest.approx(0.25 + 7.0 * 1.0)

    def test_total_d_loss_is_adversarial(self):
        real = _outs([np.full(2, 0.5)])
        fake = _outs([np.full(2, 0.5)])
        assert total_d_loss(real, fake).item() == \
            adv_d_loss(real, fake).item()


class TestErrors:
    def test_empty_outputs_rejected(self):
        with pytest.raises(ShapeMismatchError):
            adv_d_loss([], [])
        with pytest.raises(ShapeMismatchError):
            adv_g_loss([])
        with pytest.raises(ShapeMismatchError):
            feature_matching_loss([], [])

    def test_count_mismatch_rejected(self):
        a = _outs([np.zeros(2)])
        b = _outs([np.zeros(2), np.zeros(2)])
        with pytest.raises(ShapeMismatchError):
            adv_d_loss(a, b)
        with pytest.raises(ShapeMismatchError):
            feature_matching_loss(a, b)

    def test_feature_shape_mismatch_rejected(self):
        a = _outs([np.zeros(1)], [[np.zeros((2, 3))]])
        b = _outs([np.zeros(1)], [[np.zeros((3, 2))]])
        with pytest.raises(ShapeMismatchError):
            feature_matching_loss(a, b)
        c = _outs([np.zeros(1)], [[np.zeros((2, 3)), np.zeros(2)]])
        with pytest.raises(ShapeMismatchError):
            feature_matching_loss(a, c)

    def test_mel_wave_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            mel_loss(Tensor(np.zeros(4096)), Tensor(np.zeros(4097)))


class TestGradientFlow:
    def test_adv_d_gradients(self):
        s_r = Tensor(np.array([0.3, 0.9]), requires_grad=True)
        s_f = Tensor(np.array([0.2, -0.1]), requires_grad=True)
        adv_d_loss([(s_r, [])], [(s_f, [])]).backward()
        assert np.allclose(s_r.grad, 2.0 * (s_r.data - 1.0) / 2.0)
        assert np.allclose(s_f.grad, 2.0 * s_f.data / 2.0)

    def test_adv_g_gradient(self):
        s_f = Tensor(np.array([0.25]), requires_grad=True)
        adv_g_loss([(s_f, [])]).backward()
        assert np.allclose(s_f.grad, [2.0 * (0.25 - 1.0)])

    def test_feature_matching_flows_to_both_branches(self):
        fr = Tensor(np.array([1.0, 3.0]), requires_grad=True)
        ff = Tensor(np.array([2.0, 1.0]), requires_grad=True)
        feature_matching_loss([(Tensor(np.zeros(1)), [fr])],
                              [(Tensor(np.zeros(1)), [ff])]).backward()
        assert np.allclose(fr.grad, [-0.5, 0.5])
        assert np.allclose(ff.grad, [0.5, -0.5])

    def test_mel_loss_differentiable(self):
        cfg = MelConfig()
        rng = np.random.default_rng(4)
        base = rng.uniform(-0.4, 0.4, 2048)
        x = Tensor(base.copy(), requires_grad=True)
        y = Tensor(2.0 * base + 0.01 * rng.standard_normal(2048),
                   requires_grad=True)
        mel_loss(x, y, cfg).backward()
        assert x.grad is not None and np.all(np.isfinite(x.grad))
        assert y.grad is not None and np.any(y.grad != 0.0)
