import json

import numpy as np
import pytest

from scatmir.errors import ConstructionError
from scatmir.filterbank import (FilterBank, build_mel_bank, build_wavelet_bank, hz_to_mel,
                                littlewood_paley_bounds, mel_to_hz, octaves_for_lowest)


class TestMel:
    def test_well_formed(self):
        bank = build_mel_bank(40, 44100, 1024)
        assert bank.filters.shape == (40, 513)
        assert np.all(bank.filters >= 0)
        assert np.all(bank.filters.sum(axis=1) > 0)

    def test_centers_hand_computed(self):
        bank = build_mel_bank(3, 16000, 512, 0.0, 8000.0)
        top = 2595 * np.log10(1 + 8000 / 700)
        mels = np.array([1, 2, 3]) * top / 4
        expected = 700 * (10 ** (mels / 2595) - 1)
        np.testing.assert_allclose(bank.center_freqs, expected[::-1], rtol=1e-12)

    def test_degenerate_range(self):
        with pytest.raises(ConstructionError):
            build_mel_bank(10, 16000, 512, 1000.0, 1000.0)

    def test_too_many_filters(self):
        with pytest.raises(ConstructionError):
            build_mel_bank(200, 16000, 64)

    def test_zero_outside_band(self):
        bank = build_mel_bank(20, 16000, 1024, 300.0, 5000.0)
        f = bank.freqs()
        outside = (f < 300.0) | (f > 5000.0)
        assert np.all(bank.filters[:, outside] == 0)

    def test_half_height_crossing(self):
        bank = build_mel_bank(10, 16000, 2 ** 16, 0.0, 8000.0)
        # neighbours cross halfway between their centres, both at 1/2
        for a, b in zip(bank.filters[:-1], bank.filters[1:]):
            both = (a > 0) & (b > 0)
            k = np.flatnonzero(both)[np.argmin(np.abs(a - b)[both])]
            assert a[k] == pytest.approx(0.5, abs=0.01)

    def test_mel_roundtrip(self):
        f = np.array([0.0, 100.0, 1000.0, 8000.0])
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)

    def test_centers_decreasing(self):
        assert np.all(np.diff(build_mel_bank(40, 22050, 2048).center_freqs) < 0)


class TestWavelet:
    def test_dyadic(self):
        bank = build_wavelet_bank(1, 5, 16000, 1024)
        assert len(bank) == 5
        np.testing.assert_allclose(bank.center_freqs[1:] / bank.center_freqs[:-1], 0.5)

    @pytest.mark.parametrize("family", ["gabor", "spline"])
    def test_analytic(self, family):
        bank = build_wavelet_bank(4, 4, 8000, 2048, family)
        f = bank.freqs()
        assert np.all(bank.filters[:, f < 0] == 0)
        assert np.all(bank.filters[:, 0] == 0)
        assert np.all(np.isfinite(bank.filters))

    @pytest.mark.parametrize("family", ["gabor", "spline"])
    def test_centers_decreasing(self, family):
        bank = build_wavelet_bank(8, 3, 8000, 1024, family)
        assert np.all(np.diff(bank.center_freqs) < 0)

    @pytest.mark.parametrize("family", ["gabor", "spline"])
    def test_littlewood_paley_q8_j8(self, family):
        bank = build_wavelet_bank(8, 8, 44100, 2 ** 16, family)
        f = bank.freqs()
        # direct frequency sweep over the covered band
        total = np.zeros(bank.n_fft)
        for row in bank.filters:
            total += row ** 2
        total += bank.lowpass ** 2
        band = (f >= 0) & (f <= bank.center_freqs[0])
        lo, hi = littlewood_paley_bounds(bank)
        assert lo == pytest.approx(total[band].min(), abs=1e-12)
        assert hi == pytest.approx(total[band].max(), abs=1e-12)
        assert hi <= 1 + 1e-6
        assert lo >= 0.5

    def test_all_pass(self):
        bank = FilterBank(filters=np.ones((1, 8)), center_freqs=np.array([1.0]),
                          sample_rate=8.0, n_fft=8)
        assert littlewood_paley_bounds(bank) == (1.0, 1.0)

    def test_lowest_below_bin(self):
        with pytest.raises(ConstructionError):
            build_wavelet_bank(1, 12, 8000, 64)

    def test_n_fft_pow2(self):
        with pytest.raises(ConstructionError):
            build_wavelet_bank(1, 3, 8000, 1000)

    def test_family(self):
        with pytest.raises(ConstructionError):
            build_wavelet_bank(1, 3, 8000, 1024, "haar")

    def test_doubling_nfft_keeps_centers(self):
        a = build_wavelet_bank(8, 4, 8000, 4096)
        b = build_wavelet_bank(8, 4, 8000, 8192)
        np.testing.assert_allclose(a.center_freqs, b.center_freqs)
        bin_hz = 8000 / 4096
        peak_a = a.freqs()[np.argmax(a.filters, axis=1)]
        peak_b = b.freqs()[np.argmax(b.filters, axis=1)]
        assert np.all(np.abs(peak_a - peak_b) <= bin_hz)

    def test_config_roundtrip(self):
        bank = build_wavelet_bank(2, 3, 8000, 1024, "spline")
        cfg = json.loads(json.dumps(bank.config()))
        cfg.pop("kind")
        again = build_wavelet_bank(**cfg)
        np.testing.assert_array_equal(again.filters, bank.filters)

    def test_response_matches_grid(self):
        bank = build_wavelet_bank(4, 3, 8000, 512)
        np.testing.assert_allclose(bank.response(bank.freqs()[:256])[:, 1:],
                                   bank.filters[:, 1:256], atol=1e-12)
        np.testing.assert_allclose(bank.response(bank.freqs()[:256], 2), bank.filters[2, :256],
                                   atol=1e-12)

    def test_octaves_for_lowest(self):
        j = octaves_for_lowest(8, 22050, 50.0)
        bank = build_wavelet_bank(8, j, 22050, 2 ** 16)
        assert abs(np.log2(bank.center_freqs[-1] / 50.0)) < 0.6
