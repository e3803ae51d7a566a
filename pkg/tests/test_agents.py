import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ccrl import envs as E
from ccrl.agents import (Batch, DdpgAgent, DdpgConfig, MinibatchStats, OuNoise, ReplayBuffer,
                         ShareScheme, TrainConfig, actor_objective_grad, agent_rngs, anneal,
                         build_minibatch, critic_loss_grad, critic_targets, ddpg_update,
                         sample_episode_means, select_action, soft_update, train_concurrent)
from ccrl.diffcore import FeedForwardNet
from ccrl.errors import InvalidInputError

SMALL = DdpgConfig(actor_hidden=(8, 6), critic_hidden=(8, 8, 6))


def random_batch(rng, n, state_dim=2):
    return Batch(rng.normal(size=(n, state_dim)), rng.uniform(-1, 1, size=(n, 1)),
                 rng.normal(size=n), rng.normal(size=(n, state_dim)))


def filled_buffers(sizes, seed=0):
    rng = np.random.default_rng(seed)
    bufs = []
    for q, k in enumerate(sizes):
        b = ReplayBuffer(100, 1)
        for _ in range(k):
            b.add([q], [0.0], float(q), [q])
        bufs.append(b)
    return bufs, rng


# --- replay buffer -------------------------------------------------------------

def test_ring_buffer_overwrites_oldest():
    b = ReplayBuffer(5, 1)
    for i in range(8):
        b.add([i], [0.0], float(i), [i + 1])
    assert len(b) == 5
    assert sorted(b.r.tolist()) == [3, 4, 5, 6, 7]


def test_buffer_capacity_validation():
    with pytest.raises(InvalidInputError):
        ReplayBuffer(0, 1)


# --- exploration -----------------------------------------------------------------

def test_ou_zero_sigma_contracts_geometrically():
    nz = OuNoise(mu=0.5, sigma=0.0, theta_rate=0.15, dt=1.0, current=-1.0)
    rng = np.random.default_rng(0)
    prev = abs(nz.current - nz.mu)
    for _ in range(50):
        nz.sample(rng)
        gap = abs(nz.current - nz.mu)
        assert gap == pytest.approx(prev * 0.85, rel=1e-12)
        prev = gap


def test_select_action_without_noise():
    agent = DdpgAgent(2, 1, 2.0, SMALL, np.random.default_rng(0))
    nz = OuNoise(0.0, 0.0)
    nz.reset()
    s = np.array([0.3, -0.2])
    assert select_action(agent, s, nz, np.random.default_rng(1))[0] == agent.act(s)[0, 0]


def test_select_action_relaxes_to_mean():
    agent = DdpgAgent(1, 1, 2.0, SMALL, np.random.default_rng(0))
    agent.actor.params[:] = 0
    nz = OuNoise(0.5, 0.0, current=0.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        a = select_action(agent, [0.0], nz, rng)
    assert a[0] == pytest.approx(0.5, abs=1e-9)


def test_select_action_zero_actor_mean_is_zero():
    agent = DdpgAgent(1, 1, 1.0, SMALL, np.random.default_rng(0))
    agent.actor.params[:] = 0
    nz = OuNoise(0.0, 0.3)
    nz.reset()
    rng = np.random.default_rng(5)
    a = np.array([select_action(agent, [0.0], nz, rng)[0] for _ in range(10_000)])
    # autocorrelated samples: use the OU stationary sd with effective sample size
    se = a.std() / np.sqrt(10_000 * 0.15 / (2 - 0.15))
    assert abs(a.mean()) < 3 * se


def test_select_action_is_clipped():
    agent = DdpgAgent(1, 1, 1.0, SMALL, np.random.default_rng(0))
    nz = OuNoise(50.0, 0.0, current=50.0)
    assert select_action(agent, [0.0], nz, np.random.default_rng(0))[0] == 1.0


def test_episode_means():
    np.testing.assert_array_equal(sample_episode_means(5, 0.0, np.random.default_rng(0)), np.zeros(5))
    m = sample_episode_means(10_000, 1.0, np.random.default_rng(1))
    assert 0.97 <= m.std() <= 1.03
    a = sample_episode_means(4, 0.6, agent_rngs(3, 4))
    b = sample_episode_means(4, 0.6, agent_rngs(3, 4))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(InvalidInputError):
        sample_episode_means(3, -1.0, np.random.default_rng(0))


def test_anneal():
    assert anneal(0.4, 0.2, 1.0) == (0.4, 0.2)
    s = (1.0, 1.0)
    for _ in range(3):
        s = anneal(*s, 0.5)
    assert s == (0.125, 0.125)
    s1 = 1.0
    for _ in range(10_000):
        s1, _ = anneal(s1, 0.0, 0.999)
    assert s1 == pytest.approx(0.999 ** 10_000, rel=1e-9)
    assert s1 == pytest.approx(4.5e-5, rel=0.01)
    with pytest.raises(InvalidInputError):
        anneal(1.0, 1.0, 0.0)


# --- minibatches -------------------------------------------------------------------

def test_minibatch_none_uses_own_buffer():
    bufs, rng = filled_buffers([10, 10, 10])
    b = build_minibatch(bufs, ShareScheme("none"), 1, 64, rng)
    assert len(b) == 64 and np.all(b.source == 1) and np.all(b.r == 1.0)


def test_minibatch_similarity_quota():
    bufs, rng = filled_buffers([10, 10, 10])
    scheme = ShareScheme("similarity", K_bar=np.full((3, 3), 64))
    b = build_minibatch(bufs, scheme, 0, 192, rng)
    assert np.bincount(b.source, minlength=3).tolist() == [64, 64, 64]
    scheme = ShareScheme("similarity", K_bar=[[100, 0, 92]] * 3)
    b = build_minibatch(bufs, scheme, 0, 192, rng)
    assert np.bincount(b.source, minlength=3).tolist() == [100, 0, 92]


def test_minibatch_reallocates_empty_buffer():
    bufs, rng = filled_buffers([10, 0, 10])
    stats = MinibatchStats()
    scheme = ShareScheme("similarity", K_bar=np.full((3, 3), 64))
    b = build_minibatch(bufs, scheme, 0, 192, rng, stats)
    assert np.bincount(b.source, minlength=3).tolist() == [128, 0, 64]
    assert stats.reallocated == 64


def test_minibatch_seed_sampling_adds_noise():
    bufs, rng = filled_buffers([5, 5])
    scheme = ShareScheme("seed_sampling", z=np.array([0.25, -1.0]))
    b = build_minibatch(bufs, scheme, 1, 50, rng)
    np.testing.assert_allclose(b.r, b.source - 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(["similarity", "global", "none", "seed_sampling"]),
       st.integers(1, 200))
def test_minibatch_length_is_exact(seed, tag, B):
    rng = np.random.default_rng(seed)
    sizes = rng.integers(0, 20, size=4)
    sizes[2] = max(sizes[2], 1)
    bufs, _ = filled_buffers(sizes)
    from ccrl.clustering import allocate_batch
    K_bar = np.vstack([allocate_batch(rng.dirichlet(np.ones(4)), B) for _ in range(4)])
    scheme = ShareScheme(tag, K_bar=K_bar, z=np.zeros(4))
    assert len(build_minibatch(bufs, scheme, 2, B, rng)) == B


def test_scheme_validation():
    with pytest.raises(InvalidInputError):
        ShareScheme("similarity")
    with pytest.raises(InvalidInputError):
        ShareScheme("everything")


# --- DDPG ------------------------------------------------------------------------

def test_network_shapes_and_output_bound():
    agent = DdpgAgent(3, 1, 2.0, rng=np.random.default_rng(0))
    assert agent.actor.layer_sizes == [3, 256, 128, 1]
    assert agent.critic.layer_sizes == [4, 256, 256, 128, 1]
    assert agent.actor_target.layer_sizes == agent.actor.layer_sizes
    agent.actor.params *= 1000
    a = agent.act(np.random.default_rng(1).normal(size=(50, 3)) * 100)
    assert np.all(np.abs(a) <= 2.0)


def test_gamma_zero_targets_are_rewards():
    agent = DdpgAgent(2, 1, 1.0, DdpgConfig(actor_hidden=(4, 4), critic_hidden=(4, 4, 4), gamma=0.0),
                      np.random.default_rng(0))
    b = random_batch(np.random.default_rng(1), 6)
    np.testing.assert_array_equal(critic_targets(agent, b)[:, 0], b.r)


def test_tau_one_copies_live_nets():
    agent = DdpgAgent(2, 1, 1.0, DdpgConfig(actor_hidden=(4, 4), critic_hidden=(4, 4, 4), tau=1.0),
                      np.random.default_rng(0))
    ddpg_update(agent, random_batch(np.random.default_rng(1), 8))
    np.testing.assert_array_equal(agent.actor_target.params, agent.actor.params)
    np.testing.assert_array_equal(agent.critic_target.params, agent.critic.params)


def test_soft_update_contracts():
    rng = np.random.default_rng(0)
    live = FeedForwardNet([2, 3, 1], ["relu", "linear"], rng.normal(size=13))
    tgt = FeedForwardNet([2, 3, 1], ["relu", "linear"], rng.normal(size=13))
    gap = np.linalg.norm(tgt.params - live.params)
    for _ in range(20):
        soft_update(tgt, live, 0.1)
        new = np.linalg.norm(tgt.params - live.params)
        assert new == pytest.approx(0.9 * gap, rel=1e-9)
        gap = new


def fd_grad(f, p, coords, h=1e-5):
    out = []
    for i in coords:
        e = np.zeros_like(p)
        e[i] = h
        out.append((f(p + e) - f(p - e)) / (2 * h))
    return np.array(out)


def test_one_unit_critic_gradient():
    cfg = DdpgConfig(actor_hidden=(1, 1), critic_hidden=(1, 1, 1))
    agent = DdpgAgent(1, 1, 1.0, cfg, np.random.default_rng(0))
    agent.critic.params[:] = [0.7, -0.4, 0.2, 1.1, 0.3, 0.9, -0.1, 1.3, 0.05]
    b = Batch(np.array([[0.5]]), np.array([[0.2]]), np.array([1.0]), np.array([[0.4]]))
    y = critic_targets(agent, b)
    _, g = critic_loss_grad(agent, b, y)

    def f(p):
        agent.critic.params[:] = p
        return critic_loss_grad(agent, b, y)[0]

    p0 = agent.critic.params.copy()
    fd = fd_grad(f, p0, range(len(p0)))
    agent.critic.params[:] = p0
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_update_gradients_match_fd(seed):
    rng = np.random.default_rng(seed)
    agent = DdpgAgent(2, 1, 1.5, SMALL, rng)
    b = random_batch(rng, 5)
    y = critic_targets(agent, b)
    _, cg = critic_loss_grad(agent, b, y)
    _, ag = actor_objective_grad(agent, b)

    def fc(p):
        agent.critic.params[:] = p
        return critic_loss_grad(agent, b, y)[0]

    def fa(p):
        agent.actor.params[:] = p
        return actor_objective_grad(agent, b)[0]

    pc, pa = agent.critic.params.copy(), agent.actor.params.copy()
    cc = rng.choice(len(pc), 30, replace=False)
    ca = rng.choice(len(pa), 30, replace=False)
    fdc, fda = fd_grad(fc, pc, cc), fd_grad(fa, pa, ca)
    agent.critic.params[:], agent.actor.params[:] = pc, pa
    assert np.max(np.abs(cg[cc] - fdc)) / np.max(np.abs(fdc)) < 1e-4
    assert np.max(np.abs(ag[ca] - fda)) / np.max(np.abs(fda)) < 1e-4


def test_update_skips_non_finite():
    agent = DdpgAgent(2, 1, 1.0, SMALL, np.random.default_rng(0))
    b = random_batch(np.random.default_rng(1), 4)
    b.r[0] = np.nan
    before = agent.critic.params.copy()
    ddpg_update(agent, b)
    assert agent.divergences == 1
    np.testing.assert_array_equal(agent.critic.params, before)
    with pytest.raises(InvalidInputError):
        ddpg_update(agent, Batch(np.zeros((0, 2)), np.zeros((0, 1)), np.zeros(0), np.zeros((0, 2))))


def test_critic_learns_constant_reward():
    cfg = DdpgConfig(actor_hidden=(8, 8), critic_hidden=(16, 16, 8), gamma=0.0, critic_lr=1e-2)
    agent = DdpgAgent(1, 1, 1.0, cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    for _ in range(300):
        b = random_batch(rng, 32, 1)
        b.r[:] = 2.0
        loss, _ = ddpg_update(agent, b)
    assert loss < 1e-2


# --- concurrent training ----------------------------------------------------------

def tiny_setup(N=3, seed=0, T=5):
    envs = E.sample_env_group([E.GroupSpec(1.0, 0.1, N)], E.default_spec("ar", horizon=T), seed)
    agents = [DdpgAgent(1, 1, 1.0, SMALL, g) for g in agent_rngs(seed, N)]
    return envs, agents


def test_zero_epochs():
    envs, agents = tiny_setup()
    before = [a.actor.params.copy() for a in agents]
    lg = train_concurrent(envs, agents, ShareScheme("none"), TrainConfig(epochs=0, batch_size=4),
                          agent_rngs(1, 3))
    assert lg.returns.shape == (0, 3)
    for a, p in zip(agents, before):
        np.testing.assert_array_equal(a.actor.params, p)


def test_training_is_bit_reproducible():
    out = []
    for _ in range(2):
        envs, agents = tiny_setup()
        K_bar = np.full((3, 3), 4)
        lg = train_concurrent(envs, agents, ShareScheme("similarity", K_bar=K_bar),
                              TrainConfig(epochs=4, batch_size=12), agent_rngs(7, 3))
        out.append((lg.returns, agents[1].critic.params.copy()))
    np.testing.assert_array_equal(out[0][0], out[1][0])
    np.testing.assert_array_equal(out[0][1], out[1][1])


def test_none_scheme_isolation():
    # the full concurrent run equals each agent trained alone with the same streams
    cfg = TrainConfig(epochs=4, batch_size=6)
    envs, agents = tiny_setup()
    joint = train_concurrent(envs, agents, ShareScheme("none"), cfg, agent_rngs(9, 3))
    for n in range(3):
        envs_n, agents_n = tiny_setup()
        rng_n = agent_rngs(9, 3)[n]
        alone = train_concurrent([envs_n.specs[n]], [agents_n[n]], ShareScheme("none"), cfg, [rng_n])
        np.testing.assert_array_equal(alone.returns[:, 0], joint.returns[:, n])
        np.testing.assert_array_equal(agents_n[n].actor.params, agents[n].actor.params)


def test_updates_start_when_own_buffer_reaches_batch():
    envs, agents = tiny_setup(T=5)
    train_concurrent(envs, agents, ShareScheme("none"), TrainConfig(epochs=3, batch_size=10),
                     agent_rngs(0, 3))
    # 15 transitions each; updates at sizes 10..15
    assert all(a.updates == 6 for a in agents)


def test_uncoordinated_has_zero_means():
    envs, agents = tiny_setup()
    lg = train_concurrent(envs, agents, ShareScheme("none"),
                          TrainConfig(epochs=1, batch_size=100, coordinated=False), agent_rngs(0, 3))
    assert lg.sigma1 == 0.0


def test_training_rejects_mismatched_agents():
    envs, agents = tiny_setup()
    with pytest.raises(InvalidInputError):
        train_concurrent(envs, agents[:2], ShareScheme("none"), TrainConfig(epochs=1), agent_rngs(0, 3))


def test_reward_and_state_scaling(monkeypatch):
    import ccrl.agents as A
    stored = []

    class Recording(ReplayBuffer):
        def add(self, s, a, r, s2):
            stored.append((self, float(np.ravel(s)[0]), float(r), float(np.ravel(s2)[0])))
            super().add(s, a, r, s2)

    monkeypatch.setattr(A, "ReplayBuffer", Recording)
    envs, agents = tiny_setup(T=5)
    cfg = TrainConfig(epochs=2, batch_size=4, reward_scale=10.0, state_scale=4.0)
    lg = train_concurrent(envs, agents, ShareScheme("none"), cfg, agent_rngs(0, 3))
    buffers = list(dict.fromkeys(b for b, *_ in stored))
    for n, buf in enumerate(buffers):
        rows = [(s, r, s2) for b, s, r, s2 in stored if b is buf]
        target = envs.specs[n].target
        for s, r, _ in rows:
            # stored reward is the raw reward of the raw state, divided by the scale
            assert r * 10.0 == pytest.approx(np.exp(-abs(s * 4.0 - target)))
        for (_, _, s2), (s_next, _, _) in zip(rows[:4], rows[1:5]):
            assert s2 == s_next
        raw = [r * 10.0 for _, r, _ in rows]
        np.testing.assert_allclose(lg.returns[:, n], [sum(raw[:5]), sum(raw[5:])])


def test_scales_must_be_positive():
    envs, agents = tiny_setup()
    with pytest.raises(InvalidInputError):
        train_concurrent(envs, agents, ShareScheme("none"), TrainConfig(epochs=1, state_scale=0.0),
                         agent_rngs(0, 3))
