"""Recover hidden reward targets from raw transitions.

Twelve AR environments in three target groups are observed only through
random-policy transitions.  The extractor maps each agent's cause/effect
samples to one latent number; a GMM over those numbers should recover the
groups.  Run: ``python3 demos/extract_mechanisms.py``.
"""

import numpy as np

from ccrl import config as C
from ccrl.harness import extract

cfg = C.from_dict(dict(
    task="ar",
    groups=[dict(mean=m, sd=0.1, count=4) for m in (-4.0, -1.0, 4.0)],
    data=dict(P=100, interval=[-10.0, 10.0]),
))
ex = extract(cfg, seed=0)
theta = ex.fit.theta[:, 0]

print("agent  target   group  latent")
for n, spec in enumerate(ex.envs.specs):
    print(f"{n:5d}  {spec.target:6.2f}  {ex.envs.labels[n]:5d}  {theta[n]:8.3f}")
print(f"\nadjusted Rand index {ex.ari:.3f}, silhouette {ex.silhouette:.3f}")
print("GMM component means:", np.round(ex.gmm.means[:, 0], 3))
