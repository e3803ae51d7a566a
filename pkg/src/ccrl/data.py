"""Cause/effect datasets built from random-policy rollouts."""

import numpy as np

from . import envs as E
from .anm_mm import CauseEffectDataset
from .errors import InvalidInputError

# observation coordinate used as the cause for each kind
CAUSE_INDEX = {"ar": 0, "ar_sparse": 0, "pendulum_wind": 2, "cartpole_gravity": 4}
X_JITTER_SD = 1e-2  # variance 1e-4


def rollout(spec, M, rng, start_interval=None, segment_length=None):
    """``M`` transitions under a uniform random policy.

    Episodes restart every ``segment_length`` steps (default: the horizon).
    A restart uses the environment's own reset, or for the AR tasks a state
    drawn uniformly from ``start_interval`` when one is given.
    """
    segment_length = segment_length or spec.horizon
    if segment_length < 1:
        raise InvalidInputError("segment_length must be positive")

    def start():
        if start_interval is None:
            return E.reset(spec, rng)
        if spec.kind not in ("ar", "ar_sparse"):
            raise InvalidInputError("start_interval is only defined for the AR tasks")
        return np.array([rng.uniform(*start_interval)])

    S = np.empty((M, spec.state_dim))
    A = rng.uniform(-spec.action_bound, spec.action_bound, size=M)
    R = np.empty(M)
    S2 = np.empty((M, spec.state_dim))
    s = start()
    t = 0
    for m in range(M):
        if t == segment_length:
            s = start()
            t = 0
        s2, r = E.step(spec, s, A[m], rng)
        S[m], R[m], S2[m] = s, r, s2
        s = s2
        t += 1
    return S, A, R, S2


def nearest_effect(states, effects, x):
    """``effects`` of the rollout state nearest to every entry of ``x`` (1-D)."""
    states = np.asarray(states, dtype=np.float64)
    nearest = np.argmin(np.abs(np.asarray(x)[:, None] - states[None, :]), axis=1)
    return np.asarray(effects)[nearest]


def _random_state(spec, cause_value, rng):
    if spec.kind in ("ar", "ar_sparse"):
        return np.array([cause_value])
    if spec.kind == "pendulum_wind":
        th = rng.uniform(-np.pi, np.pi)
        return np.array([np.cos(th), np.sin(th), cause_value])
    th = rng.uniform(-np.pi, np.pi)
    x = rng.uniform(-E.TRACK_LIMIT, E.TRACK_LIMIT)
    xdot = rng.uniform(-1.0, 1.0)
    return np.array([x, xdot, np.cos(th), np.sin(th), cause_value])


def generate_cause_effect(envs, P, interval, effect_kind="reward", rng=None, method=None,
                          rollout_factor=10, jitter_sd=X_JITTER_SD, segment_length=10):
    """Build the ``N x P`` cause and effect matrices for a list of env specs.

    The cause is ``P`` uniform samples from ``interval`` shared by every agent,
    each agent's copy perturbed by Gaussian noise with sd ``jitter_sd``
    (variance ``1e-4`` by default).

    ``method="nearest"`` (default for the AR tasks) rolls out
    ``rollout_factor * P`` random-policy transitions per agent in segments of
    ``segment_length`` steps, each starting uniformly inside ``interval`` so
    the transitions cover the cause samples, and reads the effect off the
    transition whose state is nearest to each cause sample.
    ``method="direct"`` (default for the mechanical tasks) builds one full
    state around each cause sample and steps it once with a random action.
    Both methods use common random numbers across agents, so agents that share
    a spec produce identical effects.
    """
    specs = list(getattr(envs, "specs", envs))
    if P < 2:
        raise InvalidInputError("P must be at least 2")
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise InvalidInputError(f"degenerate interval {interval}")
    if effect_kind not in ("reward", "next_state"):
        raise InvalidInputError(f"unknown effect kind {effect_kind!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    kind = specs[0].kind
    if method is None:
        method = "nearest" if kind in ("ar", "ar_sparse") else "direct"
    idx = CAUSE_INDEX[kind]
    base = rng.uniform(lo, hi, size=P)
    crn_seed = int(rng.integers(2 ** 31))
    N = len(specs)
    X = base[None, :] + jitter_sd * rng.standard_normal((N, P))
    Y = np.empty((N, P))
    for n, spec in enumerate(specs):
        crn = np.random.default_rng(crn_seed)
        if method == "nearest":
            S, _, R, S2 = rollout(spec, rollout_factor * P, crn, (lo, hi), segment_length)
            Y[n] = nearest_effect(S[:, idx], R if effect_kind == "reward" else S2[:, idx], X[n])
        elif method == "direct":
            for p in range(P):
                s = _random_state(spec, X[n, p], crn)
                a = crn.uniform(-spec.action_bound, spec.action_bound)
                s2, r = E.step(spec, s, a, crn)
                Y[n, p] = r if effect_kind == "reward" else s2[idx]
        else:
            raise InvalidInputError(f"unknown method {method!r}")
    labels = getattr(envs, "labels", None)
    return CauseEffectDataset(X, Y, labels)
