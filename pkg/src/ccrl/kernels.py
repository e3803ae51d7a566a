"""RBF Gram matrices and the biased HSIC estimator."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InvalidInputError


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float = 1.0
    variance: float = 1.0

    def __post_init__(self):
        if not (self.lengthscale > 0 and self.variance > 0):
            raise InvalidInputError(f"kernel params must be positive: {self}")


def _as_rows(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got shape {X.shape}")
    return X


def sq_dists(Xa, Xb=None):
    """Pairwise squared Euclidean distances, clipped at zero."""
    Xa = _as_rows(Xa)
    Xb = Xa if Xb is None else _as_rows(Xb)
    if Xa.shape[1] != Xb.shape[1]:
        raise InvalidInputError(f"column mismatch {Xa.shape[1]} != {Xb.shape[1]}")
    d2 = (Xa * Xa).sum(1)[:, None] + (Xb * Xb).sum(1)[None, :] - 2.0 * Xa @ Xb.T
    np.maximum(d2, 0.0, out=d2)
    if Xb is Xa:
        np.fill_diagonal(d2, 0.0)
        d2 = 0.5 * (d2 + d2.T)
    return d2


def rbf_gram(Xa, Xb, kp=KernelParams()):
    """``variance * exp(-|xa_i - xb_j|^2 / (2 lengthscale^2))``."""
    if not isinstance(kp, KernelParams):
        kp = KernelParams(*kp)
    same = Xb is None or Xb is Xa
    d2 = sq_dists(Xa, None if same else Xb)
    return kp.variance * np.exp(-d2 / (2.0 * kp.lengthscale ** 2))


def centering_matrix(N):
    if N < 1:
        raise InvalidInputError("N must be at least 1")
    return np.eye(N) - np.full((N, N), 1.0 / N)


def double_center(K):
    """``H K H`` without forming ``H``."""
    K = np.asarray(K, dtype=np.float64)
    return K - K.mean(0, keepdims=True) - K.mean(1, keepdims=True) + K.mean()


def hsic_biased(K, L):
    """Biased HSIC estimate ``tr(K H L H) / N^2``."""
    K = np.asarray(K, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != L.shape:
        raise InvalidInputError(f"Gram shapes {K.shape} and {L.shape} do not match")
    N = K.shape[0]
    # tr(K H L H) = sum((H K H) * L) for symmetric L; use L.T to stay exact otherwise
    return float(np.sum(double_center(K) * L.T)) / N ** 2


def median_heuristic(X):
    """Median pairwise Euclidean distance between distinct rows.

    Falls back to 1.0 when every row is identical.
    """
    X = _as_rows(X)
    if X.shape[0] < 2:
        raise InvalidInputError("median heuristic needs at least two rows")
    med = float(np.median(pdist(X)))
    return med if med > 0 else 1.0
