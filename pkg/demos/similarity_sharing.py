"""From GMM responsibilities to per-agent minibatch quotas.

Shows the three matrices behind similarity-based replay sharing for a toy
latent layout: the RBF similarity between responsibility vectors, its row
normalisation, and the integer quotas each agent draws from every buffer.
Run: ``python3 demos/similarity_sharing.py``.
"""

import numpy as np

from ccrl.clustering import allocate_batch, fit_gmm_em, responsibilities, row_normalize, similarity

rng = np.random.default_rng(0)
# two tight groups and one agent sitting between them
theta = np.concatenate([rng.normal(-3, 0.2, 3), [0.0], rng.normal(3, 0.2, 3)])[:, None]
gmm = fit_gmm_em(theta, 2, seed=0)
V = responsibilities(gmm, theta)
K = similarity(V)
K_hat = row_normalize(K)
K_bar = np.vstack([allocate_batch(row, 192) for row in K_hat])

np.set_printoptions(precision=3, suppress=True, linewidth=120)
print("latent values:", theta[:, 0])
print("\nresponsibilities:\n", V)
print("\nsimilarity:\n", K)
print("\nrow-normalised similarity:\n", K_hat)
print("\nsamples drawn from each buffer (batch 192):\n", K_bar)
print("\nrow sums:", K_bar.sum(1))
