import numpy as np
import pytest

from .errors import DegenerateWindowError, InvalidArgumentError
from .signal_io import MultichannelWave
from .tf import Spectrogram, WindowSpec, istft, make_window, stft, symmetric_extend


def _random_wave(channels, samples, seed=0, fs=16000):
    rng = np.random.default_rng(seed)
    return MultichannelWave(samples=rng.standard_normal((channels, samples)), sample_rate_hz=fs)


def test_window_shapes():
    T = 16
    n = np.arange(T)
    np.testing.assert_allclose(make_window(WindowSpec('hann', T, 0.5)), 0.5 * (1 - np.cos(2 * np.pi * n / T)), atol=1e-15)
    np.testing.assert_allclose(make_window(WindowSpec('hamming', T, 0.5)), 0.54 - 0.46 * np.cos(2 * np.pi * n / T), atol=1e-15)
    assert np.array_equal(make_window(WindowSpec('rectangular', T, 0.5)), np.ones(T))


def test_window_rejects_odd_or_tiny_length():
    with pytest.raises(InvalidArgumentError):
        make_window(WindowSpec('hann', 15, 0.5))
    with pytest.raises(InvalidArgumentError):
        make_window(WindowSpec('hann', 2, 0.5))


@pytest.mark.parametrize('overlap', [0.4, 0.95, 1.0])
def test_overlap_out_of_range(overlap):
    with pytest.raises(InvalidArgumentError):
        WindowSpec('hann', 1024, overlap)


def test_shift_and_bins():
    spec = WindowSpec('hamming', 1024, 0.65)
    assert spec.shift == 358
    assert spec.num_bins == 513


def test_pure_tone_lands_in_its_bin():
    T, f = 64, 5
    n = np.arange(T * 8)
    wave = MultichannelWave(samples=np.cos(2 * np.pi * f * n / T), sample_rate_hz=8000)
    spec = stft(wave, WindowSpec('rectangular', T, 0.5))
    # Frames fully inside the signal
    inner = spec.data[0, 2:-2]
    np.testing.assert_allclose(np.abs(inner[:, f]), T / 2, rtol=1e-12)
    others = np.delete(np.abs(inner), f, axis=1)
    assert np.max(others) <= 1e-9 * T


def test_frames_match_direct_dft():
    T = 64
    window = WindowSpec('hann', T, 0.5)
    wave = _random_wave(1, 700, seed=2)
    spec = stft(wave, window)
    win = make_window(window)
    pad = T - window.shift
    padded = np.zeros((spec.num_frames - 1) * window.shift + T)
    padded[pad:pad + 700] = wave.samples[0]
    k = np.arange(T)
    dft = np.exp(-2j * np.pi * np.outer(np.arange(T // 2 + 1), k) / T)
    for q in range(spec.num_frames):
        frame = padded[q * window.shift:q * window.shift + T] * win
        expected = dft @ frame
        np.testing.assert_allclose(spec.data[0, q], expected, rtol=1e-10, atol=1e-10 * np.max(np.abs(expected)))


@pytest.mark.parametrize('kind', ['hann', 'hamming', 'rectangular'])
@pytest.mark.parametrize('overlap', [0.5, 0.65, 0.75, 0.9])
def test_round_trip(kind, overlap):
    window = WindowSpec(kind, 256, overlap)
    wave = _random_wave(2, 256 * 6 + 37, seed=11)
    back = istft(stft(wave, window))
    assert back.samples.shape == wave.samples.shape
    assert np.max(np.abs(back.samples - wave.samples)) <= 1e-10


def test_round_trip_default_analysis():
    window = WindowSpec('hann', 1024, 0.65)
    wave = _random_wave(1, 1024 * 5, seed=5)
    assert np.max(np.abs(istft(stft(wave, window)).samples - wave.samples)) <= 1e-10


@pytest.mark.slow
@pytest.mark.parametrize('kind', ['hann', 'hamming'])
@pytest.mark.parametrize('T', [256, 1024])
@pytest.mark.parametrize('overlap', [0.5, 0.65, 0.75])
def test_round_trip_three_seconds(kind, T, overlap):
    wave = _random_wave(1, 3 * 16000, seed=T)
    back = istft(stft(wave, WindowSpec(kind, T, overlap)))
    assert np.max(np.abs(back.samples - wave.samples)) <= 1e-10


def test_stft_is_linear():
    window = WindowSpec('hamming', 128, 0.65)
    x = _random_wave(1, 1000, seed=1)
    y = _random_wave(1, 1000, seed=2)
    combo = MultichannelWave(samples=2.5 * x.samples - 0.75 * y.samples, sample_rate_hz=16000)
    lhs = stft(combo, window).data
    rhs = 2.5 * stft(x, window).data - 0.75 * stft(y, window).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


def test_frame_parseval():
    T = 128
    window = WindowSpec('hann', T, 0.5)
    wave = _random_wave(1, 1500, seed=9)
    spec = stft(wave, window)
    full = symmetric_extend(spec.data[0])
    win = make_window(window)
    pad = T - window.shift
    padded = np.zeros((spec.num_frames - 1) * window.shift + T)
    padded[pad:pad + 1500] = wave.samples[0]
    for q in range(spec.num_frames):
        frame = padded[q * window.shift:q * window.shift + T] * win
        energy = np.sum(frame ** 2)
        np.testing.assert_allclose(np.sum(np.abs(full[q]) ** 2) / T, energy, rtol=1e-9)


def test_signal_shorter_than_window():
    with pytest.raises(InvalidArgumentError):
        stft(_random_wave(1, 100), WindowSpec('hann', 256, 0.5))


def test_zero_length_signal_rejected():
    with pytest.raises(InvalidArgumentError):
        MultichannelWave(samples=np.zeros((1, 0)), sample_rate_hz=16000)


def test_symmetric_extend_gives_real_inverse():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(64)
    full = symmetric_extend(np.fft.rfft(x))
    assert full.shape == (64,)
    inverse = np.fft.ifft(full)
    assert np.max(np.abs(inverse.imag)) <= 1e-12
    np.testing.assert_allclose(inverse.real, x, atol=1e-12)


def test_istft_detects_vanishing_window_power():
    window = WindowSpec('hann', 64, 0.5)
    spec = stft(_random_wave(1, 640), window)
    # Deliberately inconsistent frame count leaves the tail uncovered
    broken = Spectrogram(data=spec.data[:, :3], window=window, sample_rate_hz=16000, original_length=640)
    with pytest.raises(DegenerateWindowError):
        istft(broken)
