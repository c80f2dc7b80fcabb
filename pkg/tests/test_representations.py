import numpy as np
import pytest

from scatmir.dsp import FeatureMatrix, FrameConfig, Signal, dct2
from scatmir.errors import InvalidInputError
from scatmir.filterbank import build_mel_bank, build_wavelet_bank
from scatmir.representations import cwt, delta_mfcc, mfcc, mfsc, spectrogram

FS = 8000


def noise(n, seed=0):
    return Signal(np.random.default_rng(seed).standard_normal(n), FS)


def spec_matrix(rows):
    return FeatureMatrix(np.asarray(rows, dtype=float), 0.01, "spectrogram",
                         params={"n_fft": 256})


class TestSpectrogram:
    def test_zero(self):
        assert np.all(spectrogram(Signal(np.zeros(4096), FS)).rows == 0)

    def test_quadratic(self):
        t = np.arange(4096) / FS
        a = spectrogram(Signal(0.3 * np.sin(2 * np.pi * 440 * t), FS)).rows
        b = spectrogram(Signal(0.6 * np.sin(2 * np.pi * 440 * t), FS)).rows
        np.testing.assert_allclose(b, 4 * a, rtol=1e-9, atol=1e-15)

    def test_parseval(self):
        cfg = FrameConfig(256, 256, "rectangular")
        x = noise(256 * 8)
        s = spectrogram(x, cfg).rows
        # one-sided: interior bins count twice
        w = np.full(s.shape[1], 2.0)
        w[0] = w[-1] = 1.0
        energy = (s * w).sum(axis=1) / cfg.n_fft
        np.testing.assert_allclose(energy, np.sum(x.samples.reshape(8, 256) ** 2, axis=1),
                                   rtol=1e-6)

    def test_nonnegative(self):
        assert np.all(spectrogram(noise(4096)).rows >= 0)

    def test_shift(self):
        cfg = FrameConfig(256, 64)
        x = noise(4096).samples
        a = spectrogram(Signal(x, FS), cfg).rows
        b = spectrogram(Signal(np.concatenate([np.zeros(128), x[:-128]]), FS), cfg).rows
        np.testing.assert_allclose(b[6:-2], a[4:-4], atol=1e-9)


class TestMfsc:
    def test_zero(self):
        mel = build_mel_bank(10, FS, 256)
        assert np.all(mfsc(spec_matrix(np.zeros((3, 129))), mel).rows == 0)

    def test_single_bin(self):
        mel = build_mel_bank(10, FS, 256)
        row = np.zeros(129)
        row[40] = 1.0
        out = mfsc(spec_matrix([row]), mel).rows[0]
        w = mel.filters[:, 40] ** 2 / (2 * np.pi)
        np.testing.assert_allclose(out, w, atol=1e-15)
        assert np.count_nonzero(out) == np.count_nonzero(mel.filters[:, 40])

    def test_weighted_sum_oracle(self):
        mel = build_mel_bank(20, FS, 256)
        rows = np.random.default_rng(1).random((4, 129))
        out = mfsc(spec_matrix(rows), mel).rows
        expected = np.array([[np.sum(r * f ** 2) / (2 * np.pi) for f in mel.filters]
                             for r in rows])
        np.testing.assert_allclose(out, expected, rtol=1e-9)

    def test_width(self):
        mel = build_mel_bank(40, FS, 1024)
        out = mfsc(spectrogram(noise(8192)), mel)
        assert out.width == 40

    def test_mismatch(self):
        with pytest.raises(InvalidInputError):
            mfsc(spec_matrix(np.zeros((2, 100))), build_mel_bank(10, FS, 256))

    def test_wrong_kind(self):
        with pytest.raises(InvalidInputError):
            mfsc(FeatureMatrix(np.zeros((2, 129)), 0.01, "cwt"), build_mel_bank(10, FS, 256))


class TestMfcc:
    def mfsc_rows(self, rows):
        return FeatureMatrix(np.asarray(rows, dtype=float), 0.01, "mfsc")

    def test_constant(self):
        out = mfcc(self.mfsc_rows(np.full((2, 10), 3.0)), 10).rows
        np.testing.assert_allclose(out[:, 1:], 0, atol=1e-12)
        assert np.all(out[:, 0] != 0)

    def test_scaling_only_c0(self):
        row = np.random.default_rng(2).random((1, 16)) + 0.1
        a = mfcc(self.mfsc_rows(row), 16).rows
        b = mfcc(self.mfsc_rows(5.0 * row), 16).rows
        np.testing.assert_allclose(b[:, 1:], a[:, 1:], atol=1e-12)
        assert b[0, 0] - a[0, 0] == pytest.approx(np.log(5.0) * 4.0)

    def test_oracle(self):
        rows = np.random.default_rng(3).random((3, 16))
        rows[0, 0] = 0.0
        out = mfcc(self.mfsc_rows(rows), 6).rows
        expected = dct2(np.log(np.maximum(rows, 1e-10)), axis=1)[:, :6]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_zero_keep(self):
        with pytest.raises(InvalidInputError):
            mfcc(self.mfsc_rows(np.ones((2, 4))), 0)

    def test_too_many(self):
        with pytest.raises(InvalidInputError):
            mfcc(self.mfsc_rows(np.ones((2, 4))), 5)


class TestDelta:
    def mfcc_rows(self, rows):
        return FeatureMatrix(np.asarray(rows, dtype=float), 0.01, "mfcc")

    def test_constant(self):
        out = delta_mfcc(self.mfcc_rows(np.ones((5, 3)))).rows
        np.testing.assert_array_equal(out[:, 3:], 0)

    def test_two_rows(self):
        out = delta_mfcc(self.mfcc_rows([[1.0, 2.0], [4.0, 0.0]])).rows
        np.testing.assert_array_equal(out, [[1, 2, 0, 0], [4, 0, 3, -2]])

    def test_first_difference(self):
        rows = np.random.default_rng(4).standard_normal((7, 20))
        out = delta_mfcc(self.mfcc_rows(rows)).rows
        assert out.shape == (7, 40)
        np.testing.assert_allclose(out[1:, 20:], np.diff(rows, axis=0))

    def test_single_row(self):
        with pytest.raises(InvalidInputError):
            delta_mfcc(self.mfcc_rows(np.ones((1, 3))))


def direct_cwt(x, psi_hat):
    n = psi_hat.size
    h = np.fft.ifft(psi_hat)
    xp = np.zeros(n)
    xp[:x.size] = x
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return np.abs(h[idx] @ xp)


class TestCwt:
    def test_band_selectivity(self):
        bank = build_wavelet_bank(4, 4, FS, 4096)
        t = np.arange(4096) / FS
        j0 = 5
        x = Signal(np.sin(2 * np.pi * bank.center_freqs[j0] * t), FS)
        rows = cwt(x, bank).rows
        energy = np.sum(rows[512:-512] ** 2, axis=0)
        assert np.argmax(energy) == j0

    def test_zero(self):
        bank = build_wavelet_bank(2, 3, FS, 1024)
        assert np.all(cwt(Signal(np.zeros(1024), FS), bank).rows == 0)

    def test_direct_convolution(self):
        bank = build_wavelet_bank(2, 3, FS, 256)
        x = np.random.default_rng(5).standard_normal(200)
        out = cwt(Signal(x, FS), bank).rows
        for j in range(len(bank)):
            np.testing.assert_allclose(out[:, j], direct_cwt(x, bank.filters[j])[:200],
                                       atol=1e-6)

    def test_hop(self):
        bank = build_wavelet_bank(2, 3, FS, 1024)
        x = noise(1000)
        full = cwt(x, bank).rows
        sub = cwt(x, bank, 8).rows
        np.testing.assert_allclose(sub, full[::8], atol=1e-9)

    def test_homogeneous(self):
        bank = build_wavelet_bank(2, 3, FS, 1024)
        x = noise(1024)
        np.testing.assert_allclose(cwt(Signal(2.5 * x.samples, FS), bank).rows,
                                   2.5 * cwt(x, bank).rows, atol=1e-9)

    def test_rate_mismatch(self):
        bank = build_wavelet_bank(2, 3, 16000, 1024)
        with pytest.raises(InvalidInputError):
            cwt(noise(1024), bank)

    def test_not_wavelet(self):
        with pytest.raises(InvalidInputError):
            cwt(noise(1024), build_mel_bank(10, FS, 256))
