"""Soft mechanism clustering and similarity-weighted minibatch allocation.

A diagonal-covariance Gaussian mixture is fitted to the extracted latent
parameters.  Each agent's posterior responsibility vector is a point on the
probability simplex; an RBF kernel between those vectors, normalised per row,
says how much of an agent's minibatch should come from every other agent.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError

VAR_FLOOR = 1e-6
EMPTY_MASS = 1e-8


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: list = field(default_factory=list)
    reseeds: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def C(self):
        return len(self.weights)

    def n_free_params(self):
        C, Q = self.means.shape
        return (C - 1) + 2 * C * Q


def _as_theta(theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 1:
        theta = theta[:, None]
    if theta.ndim != 2:
        raise InvalidInputError(f"theta must be a matrix, got shape {theta.shape}")
    return theta


def _log_joint(theta, weights, means, variances):
    # log w_c + log N(theta_n | mean_c, diag var_c), shape (N, C)
    diff = theta[:, None, :] - means[None, :, :]
    ll = -0.5 * (np.log(2 * np.pi * variances)[None] + diff ** 2 / variances[None]).sum(-1)
    with np.errstate(divide="ignore"):
        return ll + np.log(weights)[None, :]


def _kmeanspp(theta, C, rng):
    N = theta.shape[0]
    idx = [int(rng.integers(N))]
    d2 = ((theta - theta[idx[0]]) ** 2).sum(1)
    for _ in range(1, C):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(N))
        else:
            nxt = int(rng.choice(N, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, ((theta - theta[nxt]) ** 2).sum(1))
    return theta[idx].copy()


def fit_gmm_em(theta, C, seed=0, max_iter=500, tol=1e-8):
    """EM for a diagonal Gaussian mixture.

    ``log_likelihood`` on the returned model records the total data
    log-likelihood of the parameters entering every E-step; it is
    non-decreasing except right after an empty component was re-seeded (those
    iteration indices are listed in ``reseeds``).
    """
    theta = _as_theta(theta)
    N, Q = theta.shape
    if not (1 <= C <= N):
        raise InvalidInputError(f"need 1 <= C <= N, got C={C}, N={N}")
    rng = np.random.default_rng(seed)
    means = _kmeanspp(theta, C, rng)
    spread = np.maximum(theta.var(0), VAR_FLOOR)
    variances = np.tile(spread, (C, 1))
    weights = np.full(C, 1.0 / C)
    history, reseeds = [], []
    it = 0
    for it in range(1, max_iter + 1):
        lj = _log_joint(theta, weights, means, variances)
        norm = logsumexp(lj, axis=1)
        ll = float(norm.sum())
        history.append(ll)
        resp = np.exp(lj - norm[:, None])
        mass = resp.sum(0)
        empty = mass < EMPTY_MASS
        if np.any(empty):
            # move each empty component onto a random point and keep iterating
            for c in np.flatnonzero(empty):
                means[c] = theta[rng.integers(N)]
                variances[c] = spread
                weights[c] = 1.0 / C
            weights /= weights.sum()
            reseeds.append(it)
            continue
        weights = mass / N
        means = (resp.T @ theta) / mass[:, None]
        sq = (resp.T @ theta ** 2) / mass[:, None] - means ** 2
        variances = np.maximum(sq, VAR_FLOOR)
        if len(history) > 1 and (it - 1) not in reseeds:
            prev = history[-2]
            if abs(ll - prev) <= tol * max(abs(prev), 1e-300):
                break
    # final likelihood of the returned parameters
    lj = _log_joint(theta, weights, means, variances)
    history.append(float(logsumexp(lj, axis=1).sum()))
    return GmmModel(weights, means, variances, history, reseeds, it)


def bic(model, theta):
    theta = _as_theta(theta)
    ll = float(logsumexp(_log_joint(theta, model.weights, model.means, model.variances), axis=1).sum())
    return -2.0 * ll + model.n_free_params() * np.log(theta.shape[0])


def fit_gmm_auto(theta, seed=0, c_max=8):
    """Pick the component count in ``[1, c_max]`` with the lowest BIC."""
    theta = _as_theta(theta)
    best = None
    for C in range(1, min(c_max, theta.shape[0]) + 1):
        m = fit_gmm_em(theta, C, seed)
        score = bic(m, theta)
        if best is None or score < best[0]:
            best = (score, m)
    return best[1]


def responsibilities(model, theta):
    """Posterior component probabilities, one simplex row per point."""
    theta = _as_theta(theta)
    if theta.shape[1] != model.means.shape[1]:
        raise InvalidInputError("theta width does not match the mixture")
    lj = _log_joint(theta, model.weights, model.means, model.variances)
    V = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    return V / V.sum(1, keepdims=True)


def hard_labels(model, theta):
    return np.argmax(responsibilities(model, theta), axis=1)


def similarity(V):
    """``K[m, n] = exp(-|v_m - v_n|^2 / 2)``."""
    V = np.asarray(V, dtype=np.float64)
    d2 = ((V[:, None, :] - V[None, :, :]) ** 2).sum(-1)
    K = np.exp(-0.5 * d2)
    np.fill_diagonal(K, 1.0)
    return K


def row_normalize(K):
    K = np.asarray(K, dtype=np.float64)
    return K / K.sum(1, keepdims=True)


def allocate_batch(k_hat_row, B):
    """Integer shares of ``B`` proportional to ``k_hat_row``, summing exactly to ``B``.

    Largest-remainder apportionment: floor every quota, then hand the leftover
    units to the largest fractional parts (ties go to the lower index).
    """
    k = np.asarray(k_hat_row, dtype=np.float64)
    if B < 1:
        raise InvalidInputError("batch size must be >= 1")
    if np.any(k < 0) or k.sum() <= 0:
        raise InvalidInputError("row must be non-negative with positive sum")
    quota = B * k / k.sum()
    base = np.floor(quota).astype(int)
    rest = int(B - base.sum())
    if rest > 0:
        frac = quota - base
        order = np.lexsort((np.arange(len(k)), -frac))
        base[order[:rest]] += 1
    return base


@dataclass
class SimilarityAllocation:
    V: np.ndarray
    K: np.ndarray
    K_hat: np.ndarray
    K_bar: np.ndarray
    B: int


def build_allocation(model, theta, B):
    V = responsibilities(model, theta)
    K = similarity(V)
    K_hat = row_normalize(K)
    K_bar = np.vstack([allocate_batch(row, B) for row in K_hat])
    return SimilarityAllocation(V, K, K_hat, K_bar, int(B))
