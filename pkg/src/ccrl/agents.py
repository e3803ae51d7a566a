"""DDPG agents trained concurrently with shared replay and coordinated exploration.

Every agent owns an environment, a replay buffer and an actor/critic pair.
Per time step all agents act (exploration noise from an OU process whose mean
``mu_n`` is redrawn at the start of every episode), then every agent builds
a minibatch from the buffers according to the sharing scheme and takes one
DDPG step.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import envs as E
from .diffcore import AdamState, FeedForwardNet, adam_step, init_fan_in
from .errors import InvalidInputError

log = logging.getLogger(__name__)

SCHEMES = ("similarity", "global", "none", "seed_sampling")


# ---------------------------------------------------------------------------
# replay
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    # index of the buffer every transition was drawn from
    source: np.ndarray = None

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity, state_dim, action_dim=1):
        if capacity < 1:
            raise InvalidInputError("capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2):
        i = self.pos
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_idx(self, k, rng):
        return rng.integers(self.size, size=k)

    def take(self, idx):
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx]


# ---------------------------------------------------------------------------
# exploration
# ---------------------------------------------------------------------------

@dataclass
class OuNoise:
    """Euler-Maruyama discretised Ornstein-Uhlenbeck process."""

    mu: float = 0.0
    sigma: float = 0.3
    theta_rate: float = 0.15
    dt: float = 1.0
    current: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidInputError("sigma must be non-negative")

    def reset(self, mu=None):
        if mu is not None:
            self.mu = float(mu)
        self.current = self.mu

    def sample(self, rng):
        x = self.current
        x += self.theta_rate * (self.mu - x) * self.dt
        if self.sigma > 0:
            x += self.sigma * np.sqrt(self.dt) * rng.standard_normal()
        self.current = x
        return x


def sample_episode_means(N, sigma1, rng):
    """Per-agent OU means ``mu_n ~ N(0, sigma1^2)``.

    ``rng`` is either one generator (``N`` draws from it) or a sequence of
    ``N`` per-agent generators (one draw from each).
    """
    if sigma1 < 0:
        raise InvalidInputError("sigma1 must be non-negative")
    if isinstance(rng, np.random.Generator):
        return sigma1 * rng.standard_normal(N)
    rngs = list(rng)
    if len(rngs) != N:
        raise InvalidInputError("need one generator per agent")
    return np.array([sigma1 * g.standard_normal() for g in rngs])


def anneal(sigma1, sigma2, decay):
    if not (0 < decay <= 1):
        raise InvalidInputError("decay must lie in (0, 1]")
    return sigma1 * decay, sigma2 * decay


# ---------------------------------------------------------------------------
# DDPG
# ---------------------------------------------------------------------------

@dataclass
class DdpgConfig:
    actor_hidden: tuple = (256, 128)
    critic_hidden: tuple = (256, 256, 128)
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    dtype: str = "float64"

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 < self.tau <= 1):
            raise InvalidInputError("need gamma in [0, 1] and tau in (0, 1]")


class DdpgAgent:
    def __init__(self, state_dim, action_dim, action_bound, config=None, rng=None):
        config = config or DdpgConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        dtype = np.dtype(config.dtype)
        self.config = config
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.action_bound = float(action_bound)
        a_sizes = [state_dim, *config.actor_hidden, action_dim]
        c_sizes = [state_dim + action_dim, *config.critic_hidden, 1]
        self.actor = init_fan_in(FeedForwardNet(a_sizes, ["relu"] * len(config.actor_hidden) + ["tanh"],
                                                dtype=dtype), rng)
        self.critic = init_fan_in(FeedForwardNet(c_sizes, ["relu"] * len(config.critic_hidden) + ["linear"],
                                                 dtype=dtype), rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState.zeros(self.actor.n_params, dtype)
        self.critic_opt = AdamState.zeros(self.critic.n_params, dtype)
        self.divergences = 0
        self.updates = 0

    def act(self, states):
        states = np.atleast_2d(states)
        return self.action_bound * self.actor.forward(states)


def select_action(agent, state, noise, rng):
    """``clip(actor(state) + ou_sample, +-action_bound)`` for a single state."""
    a = agent.act(np.asarray(state, dtype=np.float64)[None, :])[0]
    eps = noise.sample(rng)
    return np.clip(a + eps, -agent.action_bound, agent.action_bound)


def _cast(agent, batch):
    dt = agent.critic.params.dtype
    return (batch.s.astype(dt, copy=False), batch.a.astype(dt, copy=False),
            batch.r.astype(dt, copy=False)[:, None], batch.s2.astype(dt, copy=False))


def critic_targets(agent, batch):
    s, a, r, s2 = _cast(agent, batch)
    a2 = agent.action_bound * agent.actor_target.forward(s2)
    q2 = agent.critic_target.forward(np.hstack([s2, a2]))
    return r + agent.config.gamma * q2


def critic_loss_grad(agent, batch, y=None):
    """Mean squared TD error of the live critic and its parameter gradient."""
    s, a, _, _ = _cast(agent, batch)
    if y is None:
        y = critic_targets(agent, batch)
    q, cache = agent.critic.forward(np.hstack([s, a]), keep=True)
    diff = q - y
    loss = float(np.mean(diff ** 2))
    grad, _ = agent.critic.backward(cache, 2.0 * diff / len(diff))
    return loss, grad


def actor_objective_grad(agent, batch):
    """Mean ``Q(s, actor(s))`` and its gradient w.r.t. the actor parameters."""
    s, _, _, _ = _cast(agent, batch)
    mu, acache = agent.actor.forward(s, keep=True)
    q, ccache = agent.critic.forward(np.hstack([s, agent.action_bound * mu]), keep=True)
    objective = float(np.mean(q))
    _, gin = agent.critic.backward(ccache, np.full_like(q, 1.0 / len(q)), param_grad=False)
    grad, _ = agent.actor.backward(acache, agent.action_bound * gin[:, agent.state_dim:])
    return objective, grad


def soft_update(target, live, tau):
    target.params *= (1.0 - tau)
    target.params += tau * live.params


def ddpg_update(agent, batch):
    """One critic step, one actor step (ascent), then soft target updates.

    Returns ``(critic_loss, actor_objective)``.  A non-finite loss or gradient
    skips the whole update and bumps ``agent.divergences``.
    """
    if len(batch) == 0:
        raise InvalidInputError("empty batch")
    cfg = agent.config
    closs, cgrad = critic_loss_grad(agent, batch)
    if not (np.isfinite(closs) and np.all(np.isfinite(cgrad))):
        agent.divergences += 1
        return closs, float("nan")
    adam_step(agent.critic_opt, agent.critic.params, cgrad, cfg.critic_lr)
    obj, agrad = actor_objective_grad(agent, batch)
    if not (np.isfinite(obj) and np.all(np.isfinite(agrad))):
        agent.divergences += 1
        return closs, obj
    adam_step(agent.actor_opt, agent.actor.params, -agrad, cfg.actor_lr)
    soft_update(agent.critic_target, agent.critic, cfg.tau)
    soft_update(agent.actor_target, agent.actor, cfg.tau)
    agent.updates += 1
    return closs, obj


# ---------------------------------------------------------------------------
# sharing schemes and minibatches
# ---------------------------------------------------------------------------

@dataclass
class ShareScheme:
    """How agent ``n`` fills its minibatch.

    ``similarity`` draws ``K_bar[n, q]`` transitions from buffer ``q``;
    ``global`` draws from the union of all buffers; ``none`` uses only the
    agent's own buffer; ``seed_sampling`` draws from the union and adds the
    agent's fixed seed noise ``z[n]`` to every sampled reward.
    """

    tag: str = "none"
    K_bar: np.ndarray = None
    seed_noise_sd: float = 0.1
    z: np.ndarray = None

    def __post_init__(self):
        if self.tag not in SCHEMES:
            raise InvalidInputError(f"unknown scheme {self.tag!r}")
        if self.tag == "similarity":
            if self.K_bar is None:
                raise InvalidInputError("similarity scheme needs an allocation")
            self.K_bar = np.asarray(self.K_bar, dtype=int)
            if self.K_bar.ndim != 2 or self.K_bar.shape[0] != self.K_bar.shape[1] or np.any(self.K_bar < 0):
                raise InvalidInputError("K_bar must be a square non-negative integer matrix")


@dataclass
class MinibatchStats:
    reallocated: int = 0


def _gather(buffers, counts, rng):
    parts, src = [], []
    for q, k in enumerate(counts):
        if k <= 0:
            continue
        idx = buffers[q].sample_idx(int(k), rng)
        parts.append(buffers[q].take(idx))
        src.append(np.full(int(k), q))
    s, a, r, s2 = (np.concatenate(x) for x in zip(*parts))
    return Batch(s, a, r, s2, np.concatenate(src))


def _union_counts(buffers, B, rng):
    sizes = np.array([len(b) for b in buffers])
    total = sizes.sum()
    if total == 0:
        raise InvalidInputError("all buffers are empty")
    picks = rng.integers(total, size=B)
    owner = np.searchsorted(np.cumsum(sizes), picks, side="right")
    return np.bincount(owner, minlength=len(buffers))


def build_minibatch(buffers, scheme, n, B, rng, stats=None):
    """Exactly ``B`` transitions for agent ``n`` (uniform, with replacement).

    Quota assigned to an empty buffer is moved to agent ``n``'s own buffer.
    """
    N = len(buffers)
    if scheme.tag == "none":
        counts = np.zeros(N, dtype=int)
        counts[n] = B
    elif scheme.tag == "similarity":
        counts = scheme.K_bar[n].copy()
        if counts.sum() != B:
            raise InvalidInputError(f"allocation row sums to {counts.sum()}, batch size is {B}")
    else:
        counts = _union_counts(buffers, B, rng)
    for q in range(N):
        if counts[q] > 0 and len(buffers[q]) == 0 and q != n:
            counts[n] += counts[q]
            if stats is not None:
                stats.reallocated += int(counts[q])
            counts[q] = 0
    if len(buffers[n]) == 0 and counts[n] > 0:
        raise InvalidInputError(f"own buffer of agent {n} is empty")
    batch = _gather(buffers, counts, rng)
    if scheme.tag == "seed_sampling":
        batch.r = batch.r + scheme.z[n]
    return batch


# ---------------------------------------------------------------------------
# concurrent training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 150
    steps_per_epoch: int = None  # defaults to the env horizon
    batch_size: int = 192
    buffer_capacity: int = 100_000
    sigma1_scale: float = 0.6
    sigma2_scale: float = 0.3
    decay: float = 0.999
    theta_rate: float = 0.15
    coordinated: bool = True
    # learning sees reward / reward_scale and state / state_scale; logged returns stay raw
    reward_scale: float = 1.0
    state_scale: float = 1.0
    max_divergences: int = 100


@dataclass
class TrainingLog:
    returns: np.ndarray  # (epochs, N) undiscounted episode returns
    sigma1: float = 0.0
    sigma2: float = 0.0
    reallocated: int = 0
    divergences: list = field(default_factory=list)
    final_states: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)

    @property
    def epochs(self):
        return self.returns.shape[0]


class TrainingDiverged(RuntimeError):
    pass


def agent_rngs(seed, N):
    """Independent per-agent generators; agent ``n``'s stream depends only on ``(seed, n)``."""
    return [np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(n,))) for n in range(N)]


def train_concurrent(envs, agents, scheme, config, rngs, record_states=False):
    """Concurrent DDPG training; every epoch is one episode per agent."""
    specs = list(getattr(envs, "specs", envs))
    N = len(specs)
    if len(agents) != N:
        raise InvalidInputError("need one agent per environment")
    if isinstance(rngs, np.random.Generator):
        rngs = [np.random.default_rng(s) for s in rngs.bit_generator.seed_seq.spawn(N)]
    rngs = list(rngs)
    if len(rngs) != N:
        raise InvalidInputError("need one generator per agent")
    B = int(config.batch_size)
    if scheme.tag == "seed_sampling" and scheme.z is None:
        scheme.z = np.array([scheme.seed_noise_sd * g.standard_normal() for g in rngs])
    if not (config.reward_scale > 0 and config.state_scale > 0):
        raise InvalidInputError("reward_scale and state_scale must be positive")
    r_scale, s_scale = float(config.reward_scale), float(config.state_scale)
    bound = specs[0].action_bound
    sigma1 = config.sigma1_scale * bound if config.coordinated else 0.0
    sigma2 = config.sigma2_scale * bound
    buffers = [ReplayBuffer(config.buffer_capacity, s.state_dim, 1) for s in specs]
    noises = [OuNoise(0.0, sigma2, config.theta_rate, s.dt) for s in specs]
    stats = MinibatchStats()
    returns = np.zeros((config.epochs, N))
    trajectories = []
    states = []
    for epoch in range(config.epochs):
        mus = sample_episode_means(N, sigma1, rngs)
        states = []
        for n in range(N):
            noises[n].reset(mus[n])
            states.append(E.reset(specs[n], rngs[n]))
        T = config.steps_per_epoch or specs[0].horizon
        traj = np.zeros((T + 1, N)) if record_states else None
        if record_states:
            traj[0] = [s[0] for s in states]
        for t in range(T):
            for n in range(N):
                a = select_action(agents[n], states[n] / s_scale, noises[n], rngs[n])
                s2, r = E.step(specs[n], states[n], a, rngs[n])
                buffers[n].add(states[n] / s_scale, a, r / r_scale, s2 / s_scale)
                returns[epoch, n] += r
                states[n] = s2
            if record_states:
                traj[t + 1] = [s[0] for s in states]
            sigma1, sigma2 = anneal(sigma1, sigma2, config.decay)
            for nz in noises:
                nz.sigma = sigma2
            for n in range(N):
                if len(buffers[n]) < B:
                    continue
                batch = build_minibatch(buffers, scheme, n, B, rngs[n], stats)
                ddpg_update(agents[n], batch)
                if agents[n].divergences > config.max_divergences:
                    raise TrainingDiverged(f"agent {n} skipped {agents[n].divergences} updates")
        if record_states:
            trajectories.append(traj)
    return TrainingLog(returns, sigma1, sigma2, stats.reallocated,
                       [a.divergences for a in agents], states, trajectories)
