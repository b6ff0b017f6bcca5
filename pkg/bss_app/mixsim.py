"""
Synthetic convolutive mixtures: exponentially decaying noise room responses,
FIR mixing and speech-like test sources.
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidArgumentError
from .signal_io import MultichannelWave

FORMANT_LOW_HZ = 300.0


@dataclass(frozen=True)
class FirMixingSystem:
    taps: np.ndarray            # (mics M, sources N, taps L)
    sample_rate_hz: int

    def __post_init__(self) -> None:
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 3 or min(taps.shape) < 1:
            raise InvalidArgumentError(f"taps must be an M x N x L tensor with L >= 1, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise InvalidArgumentError("mixing taps must be finite")
        object.__setattr__(self, 'taps', taps)

    @property
    def num_mics(self) -> int:
        return self.taps.shape[0]

    @property
    def num_sources(self) -> int:
        return self.taps.shape[1]

    @property
    def length(self) -> int:
        return self.taps.shape[2]

    def frequency_response(self, fft_size: int) -> np.ndarray:
        """H(w) for bins 0..T/2, shape (bins, M, N)"""
        return np.moveaxis(np.fft.rfft(self.taps, n=fft_size, axis=-1), -1, 0)


def gen_rir(seed: int, M: int, N: int, L: int, t60_ms: float, fs: int) -> FirMixingSystem:
    """Each filter is Gaussian noise under a 60 dB-per-T60 exponential envelope, scaled to unit energy"""
    if M < 1 or N < 1 or L < 1:
        raise InvalidArgumentError(f"M, N and L must be positive, got M={M}, N={N}, L={L}")
    if not t60_ms > 0:
        raise InvalidArgumentError(f"t60_ms must be positive, got {t60_ms}")
    if fs <= 0:
        raise InvalidArgumentError(f"sample rate must be positive, got {fs}")

    rng = np.random.default_rng(seed)
    g = rng.standard_normal((M, N, L))
    k = np.arange(L)
    envelope = 10.0 ** (-3.0 * k / (fs * t60_ms / 1000.0))
    h = g * envelope
    h /= np.sqrt(np.sum(h ** 2, axis=-1, keepdims=True))
    return FirMixingSystem(taps=h, sample_rate_hz=fs)


def identity_system(N: int, fs: int) -> FirMixingSystem:
    return FirMixingSystem(taps=np.eye(N)[:, :, np.newaxis], sample_rate_hz=fs)


def convolve_mix(sources: MultichannelWave, sys: FirMixingSystem) -> MultichannelWave:
    """x_j(k) = sum_i sum_p taps[j, i, p] s_i(k - p), truncated to the source length"""
    if sources.num_channels != sys.num_sources:
        raise InvalidArgumentError(
            f"mixing system expects {sys.num_sources} sources, got {sources.num_channels} channels")
    if sources.sample_rate_hz != sys.sample_rate_hz:
        raise InvalidArgumentError(
            f"source rate {sources.sample_rate_hz} Hz differs from mixing system rate {sys.sample_rate_hz} Hz")

    mixed = np.zeros((sys.num_mics, sources.num_samples))
    for j in range(sys.num_mics):
        for i in range(sys.num_sources):
            mixed[j] += lfilter(sys.taps[j, i], [1.0], sources.samples[i])
    return MultichannelWave(samples=mixed, sample_rate_hz=sources.sample_rate_hz)


def stack_sources(waves: Sequence[MultichannelWave]) -> MultichannelWave:
    """Stack waves channel-wise, truncated to the shortest one"""
    if not waves:
        raise InvalidArgumentError("no source waves given")
    rates = {w.sample_rate_hz for w in waves}
    if len(rates) != 1:
        raise InvalidArgumentError(f"sources have mismatched sample rates {sorted(rates)}; resampling is not supported")
    length = min(w.num_samples for w in waves)
    samples = np.concatenate([w.samples[:, :length] for w in waves], axis=0)
    return MultichannelWave(samples=samples, sample_rate_hz=rates.pop())


def synth_speech_like(seed: int, num_samples: int, fs: int) -> np.ndarray:
    """
    Super-Gaussian stand-in for a talker: Laplacian excitation through a
    random resonant AR(2) filter, gated by a syllable-rate on/off envelope.
    """
    if num_samples < 1:
        raise InvalidArgumentError(f"num_samples must be positive, got {num_samples}")
    if not 0.4 * fs > FORMANT_LOW_HZ:
        raise InvalidArgumentError(f"sample rate {fs} Hz is too low for speech-like sources; need more than "
                                   f"{FORMANT_LOW_HZ / 0.4:.0f} Hz")
    rng = np.random.default_rng(seed)
    excitation = rng.laplace(size=num_samples)

    # Formant between 300 Hz and 3 kHz, pole radius well inside the unit circle
    f0 = rng.uniform(FORMANT_LOW_HZ, min(3000.0, 0.4 * fs))
    radius = rng.uniform(0.85, 0.97)
    a = [1.0, -2.0 * radius * np.cos(2 * np.pi * f0 / fs), radius ** 2]
    voiced = lfilter([1.0], a, excitation)

    # Syllables of 80-250 ms separated by pauses of 50-300 ms
    envelope = np.zeros(num_samples)
    pos = int(rng.integers(0, max(1, fs // 10)))
    while pos < num_samples:
        syllable = int(rng.uniform(0.08, 0.25) * fs)
        ramp = np.hanning(max(syllable, 2))
        stop = min(pos + syllable, num_samples)
        envelope[pos:stop] = ramp[:stop - pos] * rng.uniform(0.4, 1.0)
        pos = stop + int(rng.uniform(0.05, 0.3) * fs)

    signal = voiced * envelope
    peak = np.max(np.abs(signal))
    return 0.5 * signal / peak if peak > 0 else signal
