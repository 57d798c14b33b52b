"""Complexity closed forms, instrumented counting, and the MCD metric."""

import math

import numpy as np
import pytest

from wolonet.dsp import MelConfig, Waveform
from wolonet.evaluate import (MCD_ORDER, MAddsReport, empirical_madds,
                              madds_ratio, madds_report, madds_resblock,
                              madds_resblock_biased, madds_wolo, mcd,
                              mcd_from_cepstra, mel_cepstra, report_table)
from wolonet.tensor import ShapeMismatchError


class TestClosedForms:
    def test_hand_counted_tiny_cases(self):
        # C=1, K=1: predict 2*1, apply 2*1... -> 2(K^2+K)C = 4, mix 1^2+1 = 2
        assert madds_wolo(1, 1) == 6
        assert madds_resblock(1, 1) == 1
        # C=2, K=3: 2*12*2 + 4 + 2 = 54; static 3*4 = 12
        assert madds_wolo(2, 3) == 54
        assert madds_resblock(2, 3) == 12

    def test_paper_scale_values(self):
        assert madds_wolo(512, 5) == 293376
        assert madds_resblock(512, 5) == 1310720
        assert madds_ratio(512, 5) == pytest.approx(4.468, abs=1e-3)
        assert madds_wolo(64, 3) == 5696
        assert madds_resblock(64, 3) == 12288

    def test_biased_variant_adds_channel_count(self):
        for c, k in [(1, 1), (64, 3), (512, 5)]:
            assert madds_resblock_biased(c, k) == madds_resblock(c, k) + c

    def test_ratio_grows_with_width(self):
        # the static block is quadratic in C, the dynamic one nearly linear,
        # so the advantage must increase monotonically with width
        ratios = [madds_ratio(c, 5) for c in (8, 64, 512)]
        assert ratios[0] < ratios[1] < ratios[2]

    def test_invalid_sizes_rejected(self):
        with pytest.raises(ValueError):
            madds_wolo(0, 3)
        with pytest.raises(ValueError):
            madds_resblock(4, 0)

    def test_report_and_table(self):
        rep = madds_report(512, 5)
        assert rep == MAddsReport(512, 5, 293376, 1310720,
                                  1310720 / 293376)
        table = report_table()
        lines = table.strip().split("\n")
        assert lines[0] == "C,K,wolo_madds,resblock_madds,ratio"
        assert len(lines) == 10
        assert "512,5,293376,1310720,4.46771" in table


class TestInstrumentedCount:
    @pytest.mark.parametrize("c", [1, 8, 64, 512])
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_counted_ops_near_closed_form(self, c, k):
        counted = empirical_madds(c, k)
        assert abs(counted - madds_wolo(c, k)) <= 3 * k * k + 3 * k + 2 * c

    def test_count_excess_is_bias_add(self):
        # the only counted op outside the idealized model is the K^2+K
        # elementwise add of the predicted-kernel bias
        for c, k in [(8, 3), (64, 5)]:
            assert empirical_madds(c, k) - madds_wolo(c, k) == k * k + k

    @pytest.mark.parametrize("mode", ["sine", "tanh", "softmax"])
    def test_modes_count_identically(self, mode):
        # activation choice must not change the multiply-add account
        assert empirical_madds(16, 3, mode=mode) == empirical_madds(16, 3)


class TestMelCepstra:
    def test_shapes_and_order(self):
        logmel = np.random.default_rng(0).standard_normal((80, 7))
        c = mel_cepstra(logmel)
        assert c.shape == (MCD_ORDER, 7)
        assert mel_cepstra(logmel, order=4).shape == (4, 7)

    def test_matches_explicit_loops(self):
        rng = np.random.default_rng(1)
        logmel = rng.standard_normal((12, 3))
        got = mel_cepstra(logmel, order=5)
        m = 12
        for i in range(1, 6):
            for f in range(3):
                want = sum(logmel[n, f] * math.cos(math.pi * i * (n + 0.5) / m)
                           for n in range(m))
                assert got[i - 1, f] == pytest.approx(want, rel=1e-12)

    def test_constant_spectrum_has_zero_cepstra(self):
        # every c_i (i >= 1) integrates a cosine against a constant: zero
        logmel = np.full((80, 4), -3.7)
        assert np.max(np.abs(mel_cepstra(logmel))) < 1e-10

    def test_rejects_bad_input(self):
        with pytest.raises(ShapeMismatchError):
            mel_cepstra(np.zeros(80))
        with pytest.raises(ValueError, match="order"):
            mel_cepstra(np.zeros((10, 2)))


class TestMcd:
    def test_identity_is_exact_zero(self):
        x = Waveform(np.random.default_rng(2).uniform(-0.5, 0.5, 4096), 22050)
        assert mcd(x, x) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a = Waveform(rng.uniform(-0.5, 0.5, 4096), 22050)
        b = Waveform(rng.uniform(-0.5, 0.5, 4096), 22050)
        assert mcd(a, b) == pytest.approx(mcd(b, a), rel=1e-12)
        assert mcd(a, b) > 0.0

    def test_single_coefficient_delta_closed_form(self):
        # perturbing exactly one cepstral coefficient by delta gives
        # (10/ln10) * sqrt(2) * |delta| per affected frame
        rng = np.random.default_rng(4)
        c_ref = rng.standard_normal((MCD_ORDER, 6))
        c_syn = c_ref.copy()
        delta = 0.37
        c_syn[4, :] += delta
        want = (10.0 / math.log(10.0)) * math.sqrt(2.0) * delta
        assert mcd_from_cepstra(c_ref, c_syn) == pytest.approx(want, rel=1e-9)

    def test_frame_average_of_mixed_deltas(self):
        c_ref = np.zeros((MCD_ORDER, 2))
        c_syn = np.zeros((MCD_ORDER, 2))
        c_syn[0, 0] = 1.0  # frame 0 distance sqrt(2)
        c_syn[[0, 1], 1] = 1.0  # frame 1 distance sqrt(4) = 2
        db = 10.0 / math.log(10.0)
        want = (db * math.sqrt(2.0) + db * 2.0) / 2.0
        assert mcd_from_cepstra(c_ref, c_syn) == pytest.approx(want, rel=1e-12)

    def test_doubling_deltas_doubles_mcd(self):
        rng = np.random.default_rng(5)
        c_ref = rng.standard_normal((MCD_ORDER, 4))
        d = rng.standard_normal((MCD_ORDER, 4))
        m1 = mcd_from_cepstra(c_ref, c_ref + d)
        m2 = mcd_from_cepstra(c_ref, c_ref + 2.0 * d)
        assert m2 == pytest.approx(2.0 * m1, rel=1e-12)

    def test_waveform_guards(self):
        a = Waveform(np.zeros(4096), 22050)
        with pytest.raises(ShapeMismatchError):
            mcd(a, Waveform(np.zeros(4097), 22050))
        with pytest.raises(ValueError, match="rates"):
            mcd(a, Waveform(np.zeros(4096), 16000))

    def test_amplitude_scaling_is_pure_c0(self):
        # scaling a waveform shifts every log-mel bin equally, which only
        # moves the excluded c0 term; c1..c13 and hence MCD stay near zero
        x = np.random.default_rng(6).uniform(-0.3, 0.3, 8192)
        a = Waveform(x, 22050)
        b = Waveform(0.5 * x, 22050)
        assert mcd(a, b) < 0.2
