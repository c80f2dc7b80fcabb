import numpy as np
import pytest

from scatmir.dsp import (FeatureMatrix, FrameConfig, Signal, dct2, fft, frames, idct2, ifft,
                         next_pow2, stft)
from scatmir.errors import InvalidInputError


def direct_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def direct_dct(x):
    n = len(x)
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) @ x
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    return c * scale


class TestSignal:
    def test_rejects_bad_rate(self):
        with pytest.raises(InvalidInputError):
            Signal(np.zeros(4), 0)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            Signal(np.array([0.0, np.nan]), 8000)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            Signal(np.zeros(0), 8000)

    def test_duration(self):
        assert Signal(np.zeros(8000), 8000).duration == pytest.approx(1.0)


class TestFFT:
    def test_impulse_flat(self):
        spec = fft([1.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(spec.bins, np.ones(4))

    def test_constant_dc_only(self):
        spec = fft([2.5] * 4)
        np.testing.assert_allclose(spec.bins, [10.0, 0, 0, 0], atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64])
    def test_matches_direct_dft(self, n):
        x = np.random.default_rng(n).standard_normal(n)
        np.testing.assert_allclose(fft(x).bins, direct_dft(x), atol=1e-9)

    @pytest.mark.parametrize("n", [3, 5, 17, 63])
    def test_unpadded_matches_direct_dft(self, n):
        x = np.random.default_rng(n).standard_normal(n)
        np.testing.assert_allclose(fft(x, pad=False).bins, direct_dft(x), atol=1e-9)

    def test_padding_recorded(self):
        spec = fft(np.ones(5), sample_rate=8.0)
        assert spec.n_fft == 8 and spec.n_input == 5
        assert spec.bin_hz == pytest.approx(1.0)

    def test_roundtrip(self):
        x = np.random.default_rng(1).standard_normal(100)
        np.testing.assert_allclose(ifft(fft(x)).real, x, rtol=1e-9, atol=1e-12)

    def test_conjugate_symmetry(self):
        x = np.random.default_rng(2).standard_normal(32)
        b = fft(x).bins
        np.testing.assert_allclose(b[1:], np.conj(b[1:][::-1]), atol=1e-12)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            fft([])

    def test_next_pow2(self):
        assert [next_pow2(v) for v in (1, 2, 3, 1000, 1024)] == [1, 2, 4, 1024, 1024]


class TestFrameConfig:
    def test_hop_larger_than_window(self):
        with pytest.raises(InvalidInputError):
            FrameConfig(256, 512)

    def test_bad_kind(self):
        with pytest.raises(InvalidInputError):
            FrameConfig(256, 128, "blackman")

    def test_frame_count(self):
        cfg = FrameConfig(256, 100)
        assert cfg.n_frames(1000) == (1000 - 256) // 100 + 1

    def test_pad_tail_covers_end(self):
        cfg = FrameConfig(256, 100, pad_tail=True)
        n = cfg.n_frames(1000)
        assert (n - 1) * 100 + 256 >= 1000
        fr = frames(np.arange(1000.0), cfg)
        assert fr.shape == (n, 256)
        assert fr[-1, -1] == 0.0


class TestSTFT:
    def test_rows(self):
        cfg = FrameConfig(64, 16, "rectangular")
        x = Signal(np.random.default_rng(0).standard_normal(500), 1000)
        assert stft(x, cfg).n_frames == (500 - 64) // 16 + 1

    def test_bin_centred_sine(self):
        cfg = FrameConfig(64, 32, "rectangular")
        t = np.arange(1024)
        x = Signal(np.sin(2 * np.pi * 5 * t / 64), 64)
        rows = np.abs(stft(x, cfg).rows)
        assert np.all(np.argmax(rows, axis=1) == 5)
        others = np.delete(rows, 5, axis=1)
        assert others.max() < 1e-9 * rows[:, 5].min()

    def test_zero_signal(self):
        out = stft(Signal(np.zeros(2048), 8000), FrameConfig(256, 64))
        assert np.all(out.rows == 0)

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            stft(Signal(np.zeros(100), 8000), FrameConfig(256, 64))

    def test_chirp_against_frame_dft(self):
        fs = 4000
        t = np.arange(4000) / fs
        x = Signal(np.sin(2 * np.pi * (100 * t + 600 * t ** 2)), fs)
        cfg = FrameConfig(128, 64, "hann")
        out = stft(x, cfg)
        win = cfg.window()
        peaks = []
        for n, row in enumerate(out.rows):
            seg = x.samples[n * 64:n * 64 + 128] * win
            np.testing.assert_allclose(row, direct_dft(seg)[:65], atol=1e-9)
            peaks.append(np.argmax(np.abs(row)))
        assert np.all(np.diff(peaks) >= 0)

    def test_parseval(self):
        cfg = FrameConfig(128, 64, "hamming")
        x = Signal(np.random.default_rng(3).standard_normal(1024), 8000)
        rows = stft(x, cfg).rows
        fr = frames(x.samples, cfg) * cfg.window()
        full = np.concatenate([rows, np.conj(rows[:, -2:0:-1])], axis=1)
        np.testing.assert_allclose(np.sum(np.abs(full) ** 2, axis=1) / cfg.n_fft,
                                   np.sum(fr ** 2, axis=1), rtol=1e-6)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        cfg = FrameConfig(256, 64)
        a, b = rng.standard_normal(2048), rng.standard_normal(2048)
        lhs = stft(Signal(2 * a - 3 * b, 8000), cfg).rows
        rhs = 2 * stft(Signal(a, 8000), cfg).rows - 3 * stft(Signal(b, 8000), cfg).rows
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestDCT:
    def test_constant(self):
        c = dct2(np.full(8, 3.0))
        assert c[0] == pytest.approx(3.0 * np.sqrt(8))
        np.testing.assert_allclose(c[1:], 0, atol=1e-12)

    def test_basis_vector(self):
        e0 = np.array([1.0, 0, 0, 0])
        np.testing.assert_allclose(dct2(e0), direct_dct(e0), atol=1e-12)

    def test_random_against_formula(self):
        x = np.random.default_rng(5).standard_normal(13)
        np.testing.assert_allclose(dct2(x), direct_dct(x), atol=1e-12)

    def test_norm_and_inverse(self):
        x = np.random.default_rng(6).standard_normal(40)
        c = dct2(x)
        assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(x), rel=1e-9)
        np.testing.assert_allclose(idct2(c), x, atol=1e-9)

    @pytest.mark.parametrize("n", [1, 7, 64, 512])
    def test_orthonormal_matrix(self, n):
        m = dct2(np.eye(n), axis=0)
        np.testing.assert_allclose(m @ m.T, np.eye(n), atol=1e-9)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            dct2([])


class TestFeatureMatrix:
    def test_ragged(self):
        with pytest.raises(InvalidInputError):
            FeatureMatrix(np.zeros(5), 0.1, "mfcc")

    def test_nonfinite(self):
        with pytest.raises(InvalidInputError):
            FeatureMatrix(np.array([[np.inf]]), 0.1, "mfcc")

    def test_times(self):
        fm = FeatureMatrix(np.zeros((3, 2)), 0.5, "mfcc", start_seconds=1.0)
        np.testing.assert_allclose(fm.times(), [1.0, 1.5, 2.0])
