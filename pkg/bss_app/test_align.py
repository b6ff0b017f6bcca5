import itertools

import numpy as np
import pytest

from .align import (METHODS, AlignOptions, DemixingSet, align_all, apply_alignment, build_profiles,
                    cluster_centroids, composite_demixing, demixing_filters, inverse_permutation, ls_mixing,
                    minimal_distortion_rescale, permutation_criterion, permute_bin)
from .errors import InvalidArgumentError, SizeLimitError
from .tf import WindowSpec

WINDOW = WindowSpec('hamming', 64, 0.5)


def _circular(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def _unitary(rng, N):
    q, _ = np.linalg.qr(_circular(rng, (N, N)))
    return q


def test_ls_mixing_recovers_exact_model():
    rng = np.random.default_rng(0)
    Y = _circular(rng, (2, 300))
    H = _circular(rng, (3, 2))
    est = ls_mixing(H @ Y, Y)
    np.testing.assert_allclose(est.H, H, atol=1e-10)
    assert not est.rank_deficient
    np.testing.assert_allclose(ls_mixing(Y, Y).H, np.eye(2), atol=1e-10)


def test_ls_mixing_flags_rank_deficient_outputs():
    rng = np.random.default_rng(1)
    y = _circular(rng, 100)
    est = ls_mixing(_circular(rng, (2, 100)), np.vstack([y, 2 * y]))
    assert est.rank_deficient
    assert np.all(np.isfinite(est.H))


@pytest.mark.parametrize('seed', range(100))
def test_rescaling_ignores_output_scaling(seed):
    rng = np.random.default_rng(seed)
    X = _circular(rng, (3, 200))
    Y = _circular(rng, (3, 3)) @ X
    alpha = _circular(rng, 3) + 0.1
    _, ref = minimal_distortion_rescale(X, Y)
    _, scaled = minimal_distortion_rescale(X, alpha[:, np.newaxis] * Y)
    assert np.max(np.abs(scaled - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_rescaling_projects_onto_sensor_average():
    rng = np.random.default_rng(2)
    S = _circular(rng, (2, 500))
    H = _circular(rng, (2, 2))
    D, Y = minimal_distortion_rescale(H @ S, S)
    np.testing.assert_allclose(D, H.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(Y, H.mean(axis=0)[:, np.newaxis] * S, atol=1e-10)


def test_profiles_ranges():
    rng = np.random.default_rng(3)
    Y = _circular(rng, (5, 3, 40))
    Y[:, :, 7] = 0.0
    env = build_profiles(Y, 'envelope').values
    dom = build_profiles(Y, 'dominance').values
    logp = build_profiles(Y, 'log_power').values
    assert env.shape == dom.shape == logp.shape == (5, 3, 40)
    assert np.all(env >= 0)
    assert np.all(dom >= 0)
    np.testing.assert_allclose(dom.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(dom[:, :, 7], 1.0 / 3)
    np.testing.assert_allclose(logp.mean(axis=-1), 0.0, atol=1e-9)


def test_profiles_pooled_to_fixed_length():
    Y = _circular(np.random.default_rng(4), (4, 2, 100))
    pooled = build_profiles(Y, 'dominance', profile_tf=10).values
    assert pooled.shape == (4, 2, 10)
    np.testing.assert_allclose(pooled.sum(axis=1), 1.0, atol=1e-9)
    assert build_profiles(Y, 'envelope', profile_tf=500).values.shape == (4, 2, 100)


def test_unknown_profile_kind():
    with pytest.raises(InvalidArgumentError):
        build_profiles(np.ones((1, 2, 3)), 'spectral_flux')


def test_centroids_of_separated_groups():
    rng = np.random.default_rng(5)
    centers = np.array([[0.0, 0.0, 0.0], [50.0, 0.0, 0.0], [0.0, 50.0, 50.0]])
    G = np.vstack([c + rng.standard_normal((30, 3)) for c in centers])
    expected = np.vstack([G[i * 30:(i + 1) * 30].mean(axis=0) for i in range(3)])
    found = cluster_centroids(G, 3, seed=0)
    order = np.argsort(found[:, 0] + 2 * found[:, 1])
    np.testing.assert_allclose(found[order], expected[np.argsort(expected[:, 0] + 2 * expected[:, 1])], atol=1e-6)


def test_centroids_are_seeded():
    G = np.random.default_rng(6).standard_normal((40, 5))
    assert np.array_equal(cluster_centroids(G, 3, seed=1), cluster_centroids(G, 3, seed=1))


def _brute_force(F, M, measure):
    N = F.shape[0]
    best_perm, best_val = None, None
    for perm in itertools.permutations(range(N)):
        total = 0.0
        for n in range(N):
            if measure == 'distance':
                total += np.sum((M[n] - F[perm[n]]) ** 2)
            else:
                total -= np.corrcoef(M[n], F[perm[n]])[0, 1]
        if best_val is None or total < best_val:
            best_perm, best_val = perm, total
    return best_perm


@pytest.mark.parametrize('measure', ['distance', 'correlation'])
@pytest.mark.parametrize('N', [2, 3, 4])
def test_permute_bin_matches_brute_force(measure, N):
    rng = np.random.default_rng(N)
    for _ in range(8):
        F = rng.standard_normal((N, 12))
        M = rng.standard_normal((N, 12))
        perm = permute_bin(F, M, measure)
        expected = _brute_force(F, M, measure)
        assert permutation_criterion(F, M, perm, measure) == pytest.approx(
            permutation_criterion(F, M, expected, measure), rel=1e-12)
        others = [permutation_criterion(F, M, p, measure) for p in itertools.permutations(range(N))]
        chosen = permutation_criterion(F, M, perm, measure)
        if measure == 'distance':
            assert chosen <= min(others) + 1e-12
        else:
            assert chosen >= max(others) - 1e-12


def test_permute_bin_size_limit():
    with pytest.raises(SizeLimitError):
        permute_bin(np.zeros((9, 4)), np.zeros((9, 4)), 'distance')


def _planted(seed, N=3, bins=40, Q=200):
    rng = np.random.default_rng(seed)
    activity = np.where(rng.random((N, Q)) < 0.5, 1.0, 0.05)
    gains = rng.uniform(0.8, 1.2, (bins, N, 1))
    S = activity * gains * (1 + 0.1 * rng.random((bins, N, Q))) * np.exp(2j * np.pi * rng.random((bins, N, Q)))
    sigma = np.array([rng.permutation(N) for _ in range(bins)])
    Y = np.take_along_axis(S, sigma[:, :, np.newaxis], axis=1)
    return S, Y, sigma


@pytest.mark.parametrize('method', list(METHODS))
def test_align_all_recovers_planted_permutations(method):
    S, Y, sigma = _planted(10)
    bins, N, _ = Y.shape
    result = align_all(Y, method, AlignOptions(seed=0), DemixingSet.identity(bins, N, WINDOW))
    aligned = apply_alignment(Y, result)
    # Source carried by output n at each bin
    carried = np.take_along_axis(sigma, result.Gamma, axis=1)
    global_perm = max({tuple(c) for c in carried}, key=lambda c: np.sum(np.all(carried == c, axis=1)))
    hits = np.all(carried == np.array(global_perm), axis=1)
    assert hits.mean() >= 0.95
    np.testing.assert_allclose(aligned[hits], S[hits][:, list(global_perm)], rtol=1e-6)


def test_align_all_orders_outputs_by_energy():
    S, Y, _ = _planted(11, N=2)
    S[:, 1] *= 3.0
    Y = np.take_along_axis(S, np.array([np.random.default_rng(w).permutation(2) for w in range(S.shape[0])])[:, :, np.newaxis], axis=1)
    result = align_all(Y, 'method5', AlignOptions(), DemixingSet.identity(Y.shape[0], 2, WINDOW))
    out = apply_alignment(Y, result)
    energy = np.sum(np.abs(out) ** 2, axis=(0, 2))
    assert energy[0] > energy[1]


def test_align_all_unknown_method():
    with pytest.raises(InvalidArgumentError):
        align_all(np.ones((2, 2, 10)), 'method7', AlignOptions(), DemixingSet.identity(2, 2, WINDOW))


def test_demixing_set_rejects_non_permutations():
    with pytest.raises(InvalidArgumentError):
        DemixingSet(U=np.zeros((1, 2, 2)), D=np.ones((1, 2)), Gamma=np.array([[0, 0]]), window=WINDOW)


def test_inverse_permutation():
    perm = np.array([2, 0, 3, 1])
    inv = inverse_permutation(perm)
    assert np.array_equal(perm[inv], np.arange(4))
    assert np.array_equal(inv[perm], np.arange(4))


def test_composite_demixing_reproduces_aligned_outputs():
    rng = np.random.default_rng(12)
    bins, N, Q = 6, 3, 50
    U = np.stack([_unitary(rng, N) for _ in range(bins)])
    whiteners = _circular(rng, (bins, N, N))
    D = _circular(rng, (bins, N))
    Gamma = np.array([rng.permutation(N) for _ in range(bins)])
    demixing = DemixingSet(U=U, D=D, Gamma=Gamma, window=WINDOW)
    X = _circular(rng, (bins, N, Q))
    Y = np.conj(np.swapaxes(U, 1, 2)) @ whiteners @ X
    W = composite_demixing(demixing, whiteners)
    np.testing.assert_allclose(W @ X, apply_alignment(Y, demixing), atol=1e-10)


def test_demixing_filters_are_centred_fir():
    rng = np.random.default_rng(13)
    W = _circular(rng, (33, 2, 2))
    W[0] = W[0].real
    W[-1] = W[-1].real
    taps = demixing_filters(W)
    assert taps.shape == (2, 2, 64)
    back = np.fft.rfft(np.roll(taps, -32, axis=-1), axis=-1)
    np.testing.assert_allclose(np.moveaxis(back, -1, 0), W, atol=1e-12)
