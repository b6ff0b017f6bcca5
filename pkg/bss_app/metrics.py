"""
Separation quality: SIR/SDR by least-squares projection on delayed copies of
the references (time-invariant distortion filters), and the Amari index of a
global system matrix.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
from scipy.linalg import solve
from scipy.signal import fftconvolve

from .errors import InvalidArgumentError, UndefinedMetricError

METRIC_CAP_DB = 100.0
RIDGE = 1e-10


@dataclass(frozen=True)
class DecompositionResult:
    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray
    filter_len: int
    target_index: int


def _xcorr(a: np.ndarray, b: np.ndarray, max_lag: int) -> np.ndarray:
    """c[τ + max_lag - 1] = Σ_m a(m) b(m + τ) for |τ| < max_lag"""
    n = scipy.fft.next_fast_len(a.size + b.size)
    c = scipy.fft.irfft(np.conj(scipy.fft.rfft(a, n)) * scipy.fft.rfft(b, n), n)
    return np.concatenate([c[n - max_lag + 1:], c[:max_lag]])


def _delay_gram(a: np.ndarray, b: np.ndarray, L: int) -> np.ndarray:
    """
    G[d1, d2] = Σ_{k<K} a(k - d1) b(k - d2) for delays 0..L-1, delayed copies truncated at K.

    The untruncated sums form a Toeplitz matrix of cross-correlations; the
    samples pushed past the end are removed by a running sum along diagonals.
    """
    K = a.size
    c = _xcorr(a, b, L)
    lags = np.arange(L)[:, np.newaxis] - np.arange(L)[np.newaxis, :]       # d1 - d2
    full = c[lags + L - 1]

    tail_a = a[K - 1::-1][:L]
    tail_b = b[K - 1::-1][:L]
    outer = np.outer(tail_a, tail_b)
    spill = np.zeros((L, L))
    for i in range(1, L):
        spill[i, 1:] = spill[i - 1, :-1] + outer[i - 1, :-1]
    return full - spill


class ReferenceSpace:
    """Gram matrix of all references' delayed copies, computed once per reference set"""

    def __init__(self, references: np.ndarray, filter_len: int):
        references = np.atleast_2d(np.asarray(references, dtype=np.float64))
        N, K = references.shape
        if filter_len < 1 or filter_len > K // 4:
            raise InvalidArgumentError(f"filter length must lie in [1, K/4] = [1, {K // 4}], got {filter_len}")
        for i in range(N):
            if not np.any(references[i]):
                raise InvalidArgumentError(f"reference {i} is identically zero")
        self.references = references
        self.filter_len = filter_len
        L = filter_len
        gram = np.zeros((N * L, N * L))
        for i in range(N):
            for j in range(i, N):
                block = _delay_gram(references[i], references[j], L)
                gram[i * L:(i + 1) * L, j * L:(j + 1) * L] = block
                gram[j * L:(j + 1) * L, i * L:(i + 1) * L] = block.T
        self.gram = gram

    @property
    def num_sources(self) -> int:
        return self.references.shape[0]

    def _project(self, estimate: np.ndarray, indices: Sequence[int]) -> np.ndarray:
        L, K = self.filter_len, self.references.shape[1]
        sel = np.concatenate([np.arange(i * L, (i + 1) * L) for i in indices])
        G = self.gram[np.ix_(sel, sel)]
        G = G + RIDGE * np.mean(np.diag(G)) * np.eye(G.shape[0])
        rhs = np.concatenate([_xcorr(self.references[i], estimate, L)[L - 1:] for i in indices])
        coef = solve(G, rhs, assume_a='pos')
        out = np.zeros(K)
        for n, i in enumerate(indices):
            out += fftconvolve(self.references[i], coef[n * L:(n + 1) * L])[:K]
        return out

    def target_energy(self, estimate: np.ndarray, index: int) -> float:
        proj = self._project(estimate, [index])
        return float(proj @ proj)

    def decompose(self, estimate: np.ndarray, target_index: Optional[int] = None) -> DecompositionResult:
        estimate = np.asarray(estimate, dtype=np.float64)
        if estimate.shape != (self.references.shape[1],):
            raise InvalidArgumentError(
                f"estimate has {estimate.size} samples, references have {self.references.shape[1]}")
        if target_index is None:
            target_index = int(np.argmax([self.target_energy(estimate, i) for i in range(self.num_sources)]))
        s_target = self._project(estimate, [target_index])
        p_all = self._project(estimate, range(self.num_sources))
        return DecompositionResult(s_target=s_target, e_interf=p_all - s_target,
                                   e_artif=estimate - p_all, filter_len=self.filter_len,
                                   target_index=target_index)


def bss_decompose(estimate: np.ndarray, references: np.ndarray, filter_len: int = 1024,
                  target_index: Optional[int] = None) -> DecompositionResult:
    return ReferenceSpace(references, filter_len).decompose(estimate, target_index)


def _ratio_db(num: float, den: float) -> float:
    if not num > 0:
        raise UndefinedMetricError("target component has zero energy")
    if den <= num * 10.0 ** (-METRIC_CAP_DB / 10.0):
        return METRIC_CAP_DB
    return min(METRIC_CAP_DB, 10.0 * np.log10(num / den))


def sir_db(d: DecompositionResult) -> float:
    return _ratio_db(float(d.s_target @ d.s_target), float(d.e_interf @ d.e_interf))


def sdr_db(d: DecompositionResult) -> float:
    err = d.e_interf + d.e_artif
    return _ratio_db(float(d.s_target @ d.s_target), float(err @ err))


def match_estimates(space: ReferenceSpace, estimates: np.ndarray) -> List[int]:
    """Greedy bijective matching by normalized projection energy; entry i is the reference of estimate i"""
    n_est = estimates.shape[0]
    if n_est != space.num_sources:
        raise InvalidArgumentError(f"{n_est} estimates for {space.num_sources} references")
    score = np.zeros((n_est, n_est))
    for i in range(n_est):
        energy = float(estimates[i] @ estimates[i])
        for j in range(n_est):
            score[i, j] = space.target_energy(estimates[i], j) / energy if energy > 0 else 0.0
    mapping = [-1] * n_est
    for _ in range(n_est):
        i, j = np.unravel_index(np.argmax(score), score.shape)
        mapping[i] = int(j)
        score[i, :] = -np.inf
        score[:, j] = -np.inf
    return mapping


def evaluate_separation(estimates: np.ndarray, references: np.ndarray,
                        filter_len: int = 1024) -> Tuple[List[float], List[float], List[int]]:
    """Per-reference SIR and SDR (ordered by reference) plus the estimate chosen for each reference"""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    references = np.atleast_2d(np.asarray(references, dtype=np.float64))
    if estimates.shape != references.shape:
        raise InvalidArgumentError(f"estimates {estimates.shape} and references {references.shape} differ in shape")
    space = ReferenceSpace(references, filter_len)
    mapping = match_estimates(space, estimates)
    N = references.shape[0]
    sir, sdr, chosen = [0.0] * N, [0.0] * N, [0] * N
    for i, j in enumerate(mapping):
        d = space.decompose(estimates[i], target_index=j)
        sir[j], sdr[j], chosen[j] = sir_db(d), sdr_db(d), i
    return sir, sdr, chosen


def amari_index(P: np.ndarray) -> float:
    """Normalized Amari error in [0, 1]; 0 iff P is a scaled permutation"""
    A = np.abs(np.asarray(P))
    N = A.shape[0]
    if A.ndim != 2 or A.shape[1] != N:
        raise InvalidArgumentError(f"Amari index needs a square matrix, got shape {A.shape}")
    if np.any(A.max(axis=1) == 0) or np.any(A.max(axis=0) == 0):
        raise InvalidArgumentError("Amari index undefined for a matrix with an all-zero row or column")
    if N == 1:
        return 0.0
    rows = (A.sum(axis=1) / A.max(axis=1) - 1.0).sum()
    cols = (A.sum(axis=0) / A.max(axis=0) - 1.0).sum()
    return float((rows + cols) / (2.0 * N * (N - 1)))
