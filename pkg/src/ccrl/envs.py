"""Analytic control tasks whose agents differ by one hidden parameter.

Four kinds are supported:

``ar``               s' = phi s + a + eps, reward exp(-|s - target|)
``ar_sparse``        same dynamics, reward 100 exp(-|s - target|) - a^2 / 10
``pendulum_wind``    swing-up with a constant horizontal wind force on the pole
``cartpole_gravity`` cart-pole swing-up with a per-agent gravity

Angles are measured from the upright position.  Observations for the two
mechanical tasks carry ``cos`` and ``sin`` of the angle instead of the angle.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError

KINDS = ("ar", "ar_sparse", "pendulum_wind", "cartpole_gravity")
STATE_DIM = {"ar": 1, "ar_sparse": 1, "pendulum_wind": 3, "cartpole_gravity": 5}

# pendulum body
PEND_MASS = 1.0
PEND_LENGTH = 1.0
MAX_SPEED = 8.0

# cart-pole body (pole length is the half length)
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
TRACK_LIMIT = 2.4


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "ar"
    phi: float = 0.95
    noise_sd: float = 0.1
    target: float = 0.0
    wind: float = 0.0
    gravity: float = 10.0
    dt: float = 1.0
    horizon: int = 100
    action_bound: float = 1.0
    substeps: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown env kind {self.kind!r}")
        if not (self.dt > 0 and self.horizon >= 1 and self.noise_sd >= 0 and self.action_bound > 0
                and self.substeps >= 1):
            raise InvalidInputError(f"invalid env spec {self}")

    @property
    def state_dim(self):
        return STATE_DIM[self.kind]


_DEFAULTS = {
    "ar": dict(phi=0.95, noise_sd=0.1, dt=1.0, horizon=100, action_bound=1.0),
    "ar_sparse": dict(phi=0.95, noise_sd=0.1, dt=1.0, horizon=100, action_bound=2.0),
    "pendulum_wind": dict(noise_sd=0.0, gravity=10.0, dt=0.05, horizon=200, action_bound=2.0),
    "cartpole_gravity": dict(noise_sd=0.0, gravity=9.82, dt=0.02, horizon=300, action_bound=10.0,
                             substeps=1),
}


def default_spec(kind, **overrides):
    """An :class:`EnvSpec` with the stock constants for ``kind``."""
    if kind not in KINDS:
        raise InvalidInputError(f"unknown env kind {kind!r}")
    kw = dict(_DEFAULTS[kind])
    kw.update(overrides)
    return EnvSpec(kind=kind, **kw)


# ---------------------------------------------------------------------------
# autoregressive tasks
# ---------------------------------------------------------------------------

def ar_reward(spec, s):
    return float(np.exp(-abs(s - spec.target)))


def ar_sparse_reward(spec, s, a):
    return float(100.0 * np.exp(-abs(s - spec.target)) - a * a / 10.0)


def ar_step(spec, s, a, rng=None):
    """One AR transition; the reward is computed on the current state."""
    s = float(s)
    a = float(np.clip(a, -spec.action_bound, spec.action_bound))
    eps = rng.normal(0.0, spec.noise_sd) if (spec.noise_sd > 0 and rng is not None) else 0.0
    s_next = spec.phi * s + a + eps
    if spec.kind == "ar_sparse":
        r = ar_sparse_reward(spec, s, a)
    else:
        r = ar_reward(spec, s)
    return s_next, r


# ---------------------------------------------------------------------------
# pendulum with wind
# ---------------------------------------------------------------------------

def angle_normalize(th):
    return ((th + np.pi) % (2 * np.pi)) - np.pi


def pendulum_accel(spec, th, u):
    m, l = PEND_MASS, PEND_LENGTH
    return (3 * spec.gravity / (2 * l) * np.sin(th) + 3.0 / (m * l * l) * u
            + 3 * spec.wind / (2 * m * l) * np.cos(th))


def pendulum_step(spec, state, a, rng=None):
    """Semi-implicit Euler step from an observation ``[cos, sin, thdot]``."""
    c, s, thdot = (float(v) for v in state)
    th = np.arctan2(s, c)
    u = float(np.clip(a, -spec.action_bound, spec.action_bound))
    r = -(angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2)
    thdot = thdot + pendulum_accel(spec, th, u) * spec.dt
    if spec.noise_sd > 0 and rng is not None:
        thdot += rng.normal(0.0, spec.noise_sd)
    thdot = float(np.clip(thdot, -MAX_SPEED, MAX_SPEED))
    th = th + thdot * spec.dt
    return np.array([np.cos(th), np.sin(th), thdot]), float(r)


# ---------------------------------------------------------------------------
# cart-pole swing-up with gravity
# ---------------------------------------------------------------------------

def cartpole_accel(g, th, thdot, force):
    """Cart and pole accelerations for a uniform rod pole (angle 0 = upright)."""
    total = CART_MASS + POLE_MASS
    ml = POLE_MASS * POLE_HALF_LENGTH
    sin, cos = np.sin(th), np.cos(th)
    temp = (force + ml * thdot * thdot * sin) / total
    thacc = (g * sin - cos * temp) / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total))
    xacc = temp - ml * thacc * cos / total
    return xacc, thacc


def cartpole_energy(g, x, xdot, th, thdot):
    """Total mechanical energy; potential measured from the pivot height."""
    l = POLE_HALF_LENGTH
    total = CART_MASS + POLE_MASS
    kin = (0.5 * total * xdot ** 2 + POLE_MASS * l * xdot * thdot * np.cos(th)
           + 0.5 * (4.0 / 3.0) * POLE_MASS * l * l * thdot ** 2)
    return kin + POLE_MASS * g * l * np.cos(th)


def cartpole_step(spec, state, a, rng=None):
    """Semi-implicit Euler step from ``[x, xdot, cos, sin, thdot]``; reward ``cos(theta)``."""
    x, xdot, c, s, thdot = (float(v) for v in state)
    th = np.arctan2(s, c)
    f = float(np.clip(a, -spec.action_bound, spec.action_bound))
    r = float(np.cos(th))
    h = spec.dt / spec.substeps
    for _ in range(spec.substeps):
        xacc, thacc = cartpole_accel(spec.gravity, th, thdot, f)
        xdot += h * xacc
        thdot += h * thacc
        x += h * xdot
        th += h * thdot
        if abs(x) > TRACK_LIMIT:
            x = float(np.clip(x, -TRACK_LIMIT, TRACK_LIMIT))
            xdot = 0.0
    if spec.noise_sd > 0 and rng is not None:
        thdot += rng.normal(0.0, spec.noise_sd)
    return np.array([x, xdot, np.cos(th), np.sin(th), thdot]), r


# ---------------------------------------------------------------------------
# common interface
# ---------------------------------------------------------------------------

def step(spec, state, a, rng=None):
    """Dispatch on ``spec.kind``; ``state`` and the returned state are 1-D arrays."""
    a = float(np.ravel(a)[0])
    if spec.kind in ("ar", "ar_sparse"):
        s_next, r = ar_step(spec, float(np.ravel(state)[0]), a, rng)
        return np.array([s_next]), r
    if spec.kind == "pendulum_wind":
        return pendulum_step(spec, state, a, rng)
    return cartpole_step(spec, state, a, rng)


def reset(spec, rng):
    """Initial observation for one episode."""
    if spec.kind in ("ar", "ar_sparse"):
        return np.array([rng.standard_normal()])
    if spec.kind == "pendulum_wind":
        th = rng.uniform(-np.pi, np.pi)
        return np.array([np.cos(th), np.sin(th), rng.uniform(-1.0, 1.0)])
    th = np.pi + rng.normal(0.0, 0.05)
    x, xdot, thdot = rng.normal(0.0, 0.05, size=3)
    return np.array([x, xdot, np.cos(th), np.sin(th), thdot])


def reward_bounds(spec):
    if spec.kind == "ar":
        return 0.0, 1.0
    if spec.kind == "ar_sparse":
        return -np.inf, 100.0
    if spec.kind == "pendulum_wind":
        return -np.inf, 0.0
    return -1.0, 1.0


# ---------------------------------------------------------------------------
# groups of environments
# ---------------------------------------------------------------------------

# hidden parameter carried by each kind
HIDDEN_PARAM = {"ar": "target", "ar_sparse": "target", "pendulum_wind": "wind",
                "cartpole_gravity": "gravity"}


@dataclass(frozen=True)
class GroupSpec:
    mean: float
    sd: float
    count: int
    param: str = "target"

    def __post_init__(self):
        if self.sd < 0 or self.count < 1:
            raise InvalidInputError(f"invalid group {self}")


@dataclass
class SampledEnvs:
    specs: list
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.specs)


def sample_env_group(groups, base, seed):
    """One spec per agent, hidden parameter drawn from its group's Gaussian."""
    rng = np.random.default_rng(seed)
    specs, labels = [], []
    for label, g in enumerate(groups):
        if g.param not in ("target", "wind", "gravity", "phi"):
            raise InvalidInputError(f"cannot vary parameter {g.param!r}")
        draws = g.mean + g.sd * rng.standard_normal(g.count)
        for v in draws:
            specs.append(replace(base, **{g.param: float(v)}))
            labels.append(label)
    return SampledEnvs(specs, np.array(labels, dtype=int))
