"""
Per-bin second-order preprocessing: Tikhonov-regularized sample covariance,
eigendecomposition and whitening, Z = Λ^(-1/2) Vᴴ X.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.linalg import eigh

from .errors import InvalidArgumentError, NumericalRankError

# Eigenvalues below this fraction of the largest are treated as zero
RANK_TOL = 1e-12


@dataclass(frozen=True)
class BinData:
    X: np.ndarray               # (channels, frames) at one frequency bin
    bin_index: int

    def __post_init__(self) -> None:
        X = np.asarray(self.X)
        if X.ndim != 2:
            raise InvalidArgumentError(f"bin data must be a channels x frames matrix, got shape {X.shape}")
        if X.shape[1] < X.shape[0]:
            raise InvalidArgumentError(
                f"bin {self.bin_index}: {X.shape[1]} frames for {X.shape[0]} channels; need at least as many frames")
        object.__setattr__(self, 'X', X.astype(np.complex128, copy=False))


@dataclass(frozen=True)
class WhiteningBundle:
    V: np.ndarray               # unitary eigenvectors, columns sorted by descending eigenvalue
    Lambda: np.ndarray          # regularized eigenvalues, descending
    c: float
    Z: np.ndarray
    whitener: np.ndarray        # Λ^(-1/2) Vᴴ


def covariance(bin: BinData) -> np.ndarray:
    X = bin.X
    Q = X.shape[1]
    if Q < 2:
        raise InvalidArgumentError(f"bin {bin.bin_index}: covariance needs at least 2 frames, got {Q}")
    R = X @ X.conj().T / Q
    return 0.5 * (R + R.conj().T)


def regularize(R: np.ndarray, m: float) -> Tuple[np.ndarray, float]:
    """R + c·I with c = m·tr(R)"""
    if m < 0:
        raise InvalidArgumentError(f"regularization constant m must be >= 0, got {m}")
    c = float(m * np.real(np.trace(R)))
    return R + c * np.eye(R.shape[0]), c


def _fix_phase(V: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real and positive"""
    idx = np.argmax(np.abs(V), axis=0)
    pivots = V[idx, np.arange(V.shape[1])]
    return V * (np.conj(pivots) / np.abs(pivots))


def whiten_bin(bin: BinData, m: float) -> WhiteningBundle:
    R_reg, c = regularize(covariance(bin), m)
    eigvals, V = eigh(R_reg)
    order = np.argsort(eigvals)[::-1]
    eigvals, V = eigvals[order], V[:, order]

    top = float(eigvals[0]) if eigvals.size else 0.0
    if top <= 0 or eigvals[-1] <= RANK_TOL * top:
        raise NumericalRankError(
            f"bin {bin.bin_index}: regularized covariance is numerically rank deficient "
            f"(eigenvalues {eigvals[-1]:.3e}..{top:.3e}); increase the regularization constant m (now {m})")

    V = _fix_phase(V)
    whitener = (V / np.sqrt(eigvals)).conj().T
    return WhiteningBundle(V=V, Lambda=eigvals, c=c, Z=whitener @ bin.X, whitener=whitener)
