"""
Scaling and permutation ambiguities of per-bin ICA.

Scaling follows the minimal distortion principle: each output is rescaled to
its average image over the sensors. Permutations are solved by clustering
per-bin source profiles (envelope, log-power or dominance) into frequency
independent centroids and matching every bin to them by exhaustive search.
"""
import itertools
import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from sklearn.cluster import KMeans

from .errors import InvalidArgumentError, SizeLimitError
from .tf import WindowSpec

logger = logging.getLogger(__name__)

PROFILE_KINDS = ('envelope', 'log_power', 'dominance')
MEASURES = ('distance', 'correlation')
PROCEDURES = ('iterative', 'kmeans')
LOG_POWER_EPS = 1e-12
MAX_EXHAUSTIVE_SOURCES = 8
MAX_ITERATIVE_ROUNDS = 50
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-6

# (profile, measure, procedure) of each permutation solver
METHODS: Dict[str, Tuple[str, str, str]] = {
    'method1': ('envelope', 'distance', 'iterative'),
    'method2': ('log_power', 'correlation', 'iterative'),
    'method3': ('envelope', 'distance', 'kmeans'),
    'method4': ('log_power', 'correlation', 'kmeans'),
    'method5': ('dominance', 'correlation', 'iterative'),
    'method6': ('dominance', 'correlation', 'kmeans'),
}


@dataclass(frozen=True)
class DemixingSet:
    U: np.ndarray               # (bins, N, N) unitary extractors (columns)
    D: np.ndarray               # (bins, N) minimal-distortion gains of the unpermuted outputs
    Gamma: np.ndarray           # (bins, N): output n at bin w is separated row Gamma[w, n]
    window: WindowSpec

    def __post_init__(self) -> None:
        bins, N = self.Gamma.shape
        expected = np.arange(N)
        for w in range(bins):
            if not np.array_equal(np.sort(self.Gamma[w]), expected):
                raise InvalidArgumentError(f"Gamma at bin {w} is not a permutation: {self.Gamma[w]}")

    @classmethod
    def identity(cls, bins: int, N: int, window: WindowSpec) -> 'DemixingSet':
        return cls(U=np.tile(np.eye(N, dtype=np.complex128), (bins, 1, 1)),
                   D=np.ones((bins, N), dtype=np.complex128),
                   Gamma=np.tile(np.arange(N), (bins, 1)),
                   window=window)


@dataclass(frozen=True)
class ProfileMatrix:
    values: np.ndarray          # (bins, N, T_f)
    kind: str


@dataclass(frozen=True)
class MixingEstimate:
    H: np.ndarray
    rank_deficient: bool


@dataclass(frozen=True)
class AlignOptions:
    profile_tf: Optional[int] = None    # None: one profile point per STFT frame
    seed: int = 0


def ls_mixing(X_bin: np.ndarray, Y_bin: np.ndarray) -> MixingEstimate:
    """H_LS = X Yᴴ (Y Yᴴ)⁺"""
    gram = Y_bin @ Y_bin.conj().T
    rank = np.linalg.matrix_rank(gram)
    if rank < gram.shape[0]:
        logger.debug("separated outputs are rank deficient (%d < %d); using the pseudo-inverse", rank, gram.shape[0])
    H = X_bin @ Y_bin.conj().T @ np.linalg.pinv(gram, hermitian=True)
    return MixingEstimate(H=H, rank_deficient=bool(rank < gram.shape[0]))


def minimal_distortion_rescale(X_bin: np.ndarray, Y_bin: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """D = diag(A·H_LS) with A the N×M matrix of 1/M; returns (D, D·Y)"""
    H = ls_mixing(X_bin, Y_bin).H
    D = H.mean(axis=0)
    return D, D[:, np.newaxis] * Y_bin


def _pool_frames(values: np.ndarray, tf: int) -> np.ndarray:
    """Average a (bins, N, Q) profile over tf half-overlapping segments spanning all Q frames"""
    Q = values.shape[-1]
    if tf >= Q:
        return values
    seg = max(1, int(np.ceil(2.0 * Q / (tf + 1))))
    starts = np.round(np.linspace(0, Q - seg, tf)).astype(int)
    return np.stack([values[..., s:s + seg].mean(axis=-1) for s in starts], axis=-1)


def build_profiles(Y: np.ndarray, kind: str, profile_tf: Optional[int] = None) -> ProfileMatrix:
    """Per-bin profiles of the separated spectra Y (bins, N, Q)"""
    if kind not in PROFILE_KINDS:
        raise InvalidArgumentError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
    power = np.abs(Y) ** 2
    N = Y.shape[1]

    if kind == 'envelope':
        values = np.abs(Y)
    elif kind == 'dominance':
        total = power.sum(axis=1, keepdims=True)
        values = np.divide(power, total, out=np.full_like(power, 1.0 / N), where=total > 0)
    else:
        values = power

    if profile_tf is not None:
        values = _pool_frames(values, profile_tf)
    if kind == 'log_power':
        values = np.log(values + LOG_POWER_EPS)
        values = values - values.mean(axis=-1, keepdims=True)
    return ProfileMatrix(values=values, kind=kind)


def cluster_centroids(G: np.ndarray, N: int, seed: int) -> np.ndarray:
    """k-means (k = N, seeded k-means++) over the stacked F·N × T_f profile rows"""
    if G.shape[0] < N:
        raise InvalidArgumentError(f"{G.shape[0]} profile rows cannot form {N} clusters")
    if N == 1:
        return G.mean(axis=0, keepdims=True)
    km = KMeans(n_clusters=N, init='k-means++', n_init=1, max_iter=KMEANS_MAX_ITER,
                tol=KMEANS_TOL, random_state=seed, algorithm='lloyd')
    km.fit(G)
    return km.cluster_centers_


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0


def _match_scores(F_w: np.ndarray, M: np.ndarray, measure: str) -> np.ndarray:
    """scores[n, k]: cost (distance) or gain (correlation) of feeding profile k to centroid n"""
    if measure == 'distance':
        return ((M[:, np.newaxis, :] - F_w[np.newaxis, :, :]) ** 2).sum(axis=-1)
    if measure == 'correlation':
        N = M.shape[0]
        return np.array([[_pearson(M[n], F_w[k]) for k in range(N)] for n in range(N)])
    raise InvalidArgumentError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def permute_bin(F_w: np.ndarray, M: np.ndarray, measure: str) -> Tuple[int, ...]:
    """Exhaustive search over all N! assignments; output n takes profile row perm[n]"""
    N = F_w.shape[0]
    if N > MAX_EXHAUSTIVE_SOURCES:
        raise SizeLimitError(f"exhaustive permutation search is limited to N <= {MAX_EXHAUSTIVE_SOURCES}, got {N}")
    scores = _match_scores(F_w, M, measure)
    sign = 1.0 if measure == 'distance' else -1.0
    rows = np.arange(N)
    best, best_val = tuple(range(N)), np.inf
    for perm in itertools.permutations(range(N)):
        val = sign * scores[rows, list(perm)].sum()
        if val < best_val:
            best, best_val = perm, val
    return best


def permutation_criterion(F_w: np.ndarray, M: np.ndarray, perm, measure: str) -> float:
    """Criterion value of a given assignment (distance is minimized, correlation maximized)"""
    scores = _match_scores(F_w, M, measure)
    return float(scores[np.arange(F_w.shape[0]), list(perm)].sum())


def _permute_all(profiles: np.ndarray, M: np.ndarray, measure: str) -> np.ndarray:
    return np.array([permute_bin(profiles[w], M, measure) for w in range(profiles.shape[0])], dtype=int)


def _permuted(profiles: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    return np.take_along_axis(profiles, gamma[:, :, np.newaxis], axis=1)


def align_all(Y: np.ndarray, method: str, opts: AlignOptions, demixing: DemixingSet) -> DemixingSet:
    """Solve per-bin permutations of the rescaled spectra Y (bins, N, Q) with one of method1..method6"""
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown permutation method {method!r}; expected one of {tuple(METHODS)}")
    kind, measure, procedure = METHODS[method]
    bins, N, _ = Y.shape

    profiles = build_profiles(Y, kind, opts.profile_tf).values
    M = cluster_centroids(profiles.reshape(bins * N, -1), N, opts.seed)
    gamma = _permute_all(profiles, M, measure)

    if procedure == 'iterative':
        for round_no in range(1, MAX_ITERATIVE_ROUNDS + 1):
            M = _permuted(profiles, gamma).mean(axis=0)
            updated = _permute_all(profiles, M, measure)
            if np.array_equal(updated, gamma):
                logger.debug("iterative alignment stable after %d rounds", round_no)
                break
            gamma = updated

    # One global labeling: outputs ordered by descending broadband energy
    energy = np.take_along_axis(np.sum(np.abs(Y) ** 2, axis=-1), gamma, axis=1).sum(axis=0)
    order = np.argsort(-energy, kind='stable')
    gamma = gamma[:, order]
    return replace(demixing, Gamma=gamma)


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def apply_alignment(Y: np.ndarray, demixing: DemixingSet) -> np.ndarray:
    """Output row n at bin w is D[w, Γ[w, n]] · Y[w, Γ[w, n]]"""
    scaled = demixing.D[:, :, np.newaxis] * Y
    return np.take_along_axis(scaled, demixing.Gamma[:, :, np.newaxis], axis=1)


def composite_demixing(demixing: DemixingSet, whiteners: np.ndarray) -> np.ndarray:
    """Per-bin W(w) with W(w)·x(q, w) equal to the aligned, rescaled outputs"""
    raw = np.conj(np.swapaxes(demixing.U, 1, 2)) @ whiteners       # Uᴴ · whitener
    raw = demixing.D[:, :, np.newaxis] * raw
    return np.take_along_axis(raw, demixing.Gamma[:, :, np.newaxis], axis=1)


def demixing_filters(W: np.ndarray) -> np.ndarray:
    """Causal time-domain FIR demixing filters (N, M, T) from the per-bin matrices (bins, N, M)"""
    T = 2 * (W.shape[0] - 1)
    taps = np.fft.irfft(np.moveaxis(W, 0, -1), n=T, axis=-1)
    return np.roll(taps, T // 2, axis=-1)
