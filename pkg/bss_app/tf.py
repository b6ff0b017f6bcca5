"""
Short-time Fourier analysis and weighted overlap-add synthesis.

Only the non-negative frequency bins 0..T/2 of each frame are stored; the
negative half is recovered through Hermitian symmetry (symmetric_extend).
"""
from dataclasses import dataclass

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .errors import DegenerateWindowError, InvalidArgumentError
from .signal_io import MultichannelWave

WINDOW_KINDS = ('hann', 'hamming', 'rectangular')
_SCIPY_NAMES = {'hann': 'hann', 'hamming': 'hamming', 'rectangular': 'boxcar'}


@dataclass(frozen=True)
class WindowSpec:
    kind: str
    length: int
    overlap: float

    def __post_init__(self) -> None:
        if self.kind not in WINDOW_KINDS:
            raise InvalidArgumentError(f"unknown window kind {self.kind!r}; expected one of {WINDOW_KINDS}")
        if self.length < 1:
            raise InvalidArgumentError(f"window length must be positive, got {self.length}")
        if not 0.5 <= self.overlap < 0.95:
            raise InvalidArgumentError(f"overlap ratio must lie in [0.5, 0.95), got {self.overlap}")
        if self.shift < 1:
            raise InvalidArgumentError(f"window length {self.length} with overlap {self.overlap} gives a zero shift")

    @property
    def shift(self) -> int:
        return int(round(self.length * (1.0 - self.overlap)))

    @property
    def num_bins(self) -> int:
        return self.length // 2 + 1


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray            # (channels, frames, bins), complex
    window: WindowSpec
    sample_rate_hz: int
    original_length: int

    @property
    def pad_front(self) -> int:
        # Leading zeros placed before sample 0 so it gets the steady-state window power
        return self.window.length - self.window.shift

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]


def make_window(spec: WindowSpec) -> np.ndarray:
    """Periodic window of length T: hann 0.5(1 - cos(2πn/T)), hamming 0.54 - 0.46cos(2πn/T), or ones"""
    T = spec.length
    if T < 4 or T % 2:
        raise InvalidArgumentError(f"window length must be even and >= 4, got {T}")
    return get_window(_SCIPY_NAMES[spec.kind], T, fftbins=True).astype(np.float64)


def _frame_count(num_samples: int, spec: WindowSpec) -> int:
    pad = spec.length - spec.shift
    total = num_samples + 2 * pad
    return -(-(total - spec.length) // spec.shift) + 1


def stft(wave: MultichannelWave, spec: WindowSpec, workers: int = 1) -> Spectrogram:
    T, shift = spec.length, spec.shift
    win = make_window(spec)
    K = wave.num_samples
    if K < T:
        raise InvalidArgumentError(f"signal of {K} samples is shorter than the window length {T}")

    pad = T - shift
    Q = _frame_count(K, spec)
    padded = np.zeros((wave.num_channels, (Q - 1) * shift + T))
    padded[:, pad:pad + K] = wave.samples

    frames = sliding_window_view(padded, T, axis=-1)[:, ::shift][:, :Q]
    data = scipy.fft.rfft(frames * win, axis=-1, workers=workers)
    return Spectrogram(data=data, window=spec, sample_rate_hz=wave.sample_rate_hz, original_length=K)


def istft(spec: Spectrogram, workers: int = 1) -> MultichannelWave:
    window = spec.window
    T, shift = window.length, window.shift
    win = make_window(window)
    M, Q, _ = spec.data.shape

    frames = np.real(scipy.fft.ifft(symmetric_extend(spec.data), n=T, axis=-1, workers=workers)) * win
    pad, K = spec.pad_front, spec.original_length
    total = max((Q - 1) * shift + T, pad + K)
    acc = np.zeros((M, total))
    power = np.zeros(total)
    win_sq = win ** 2
    for q in range(Q):
        start = q * shift
        acc[:, start:start + T] += frames[:, q]
        power[start:start + T] += win_sq

    power = power[pad:pad + K]
    floor = 1e-12 * max(float(power.max(initial=0.0)), 1e-300)
    if np.any(power <= floor):
        bad = int(np.argmax(power <= floor))
        raise DegenerateWindowError(f"window power vanishes at sample {bad}; cannot invert the {window.kind} window")
    return MultichannelWave(samples=acc[:, pad:pad + K] / power, sample_rate_hz=spec.sample_rate_hz)


def symmetric_extend(half_bins: np.ndarray) -> np.ndarray:
    """Extend bins 0..T/2 (last axis) to the full spectrum 0..T-1 using bin T-w = conj(bin w)"""
    half_bins = np.asarray(half_bins)
    B = half_bins.shape[-1]
    mirrored = np.conj(half_bins[..., B - 2:0:-1])
    return np.concatenate([half_bins, mirrored], axis=-1)
