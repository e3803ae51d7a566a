"""Invariant suite behind ``ccrl check``.

Every check recomputes a quantity through an independent route (explicit
loops, finite differences, closed forms) and compares against the library.
"""

from dataclasses import dataclass

import numpy as np

from . import envs as E
from .agents import (Batch, DdpgAgent, DdpgConfig, actor_objective_grad, critic_loss_grad,
                     critic_targets)
from .anm_mm import AnmMmModel, CauseEffectDataset, GpHyper, JointObjective, encode, make_encoder
from .clustering import allocate_batch, fit_gmm_em
from .diffcore import init_normal
from .kernels import KernelParams, hsic_biased, median_heuristic


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def naive_hsic(K, L):
    """Double centring written out with scalar loops."""
    N = len(K)
    def center(M):
        row = [sum(M[i][j] for j in range(N)) / N for i in range(N)]
        col = [sum(M[i][j] for i in range(N)) / N for j in range(N)]
        tot = sum(row) / N
        return [[M[i][j] - row[i] - col[j] + tot for j in range(N)] for i in range(N)]
    Kc, Lc = center(K), center(L)
    return sum(Kc[i][j] * Lc[j][i] for i in range(N) for j in range(N)) / N ** 2


def check_hsic(instances=20, seed=0, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        N = int(rng.integers(1, 7))
        A, Bm = rng.normal(size=(N, N)), rng.normal(size=(N, N))
        K, L = A @ A.T, Bm @ Bm.T
        worst = max(worst, abs(hsic_biased(K, L) - naive_hsic(K.tolist(), L.tolist())))
    return CheckResult("hsic oracle", worst <= tol, f"max abs err {worst:.2e} (tol {tol:g})")


def central_difference(f, x, coords, h=1e-5):
    out = np.empty(len(coords))
    for j, i in enumerate(coords):
        e = np.zeros_like(x)
        e[i] = h
        out[j] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def joint_loss_fd_errors(instances=5, seed=0):
    errs = []
    for k in range(instances):
        rng = np.random.default_rng(seed + k)
        N, P = int(rng.integers(4, 9)), int(rng.integers(2, 7))
        ds = CauseEffectDataset(rng.normal(size=(N, P)), rng.normal(size=(N, P)))
        enc = init_normal(make_encoder(P, 5, 1), rng, sd=0.5)
        hyper = GpHyper(KernelParams(float(rng.uniform(0.8, 2)), float(rng.uniform(0.5, 2))),
                        float(rng.uniform(2, 10)))
        model = AnmMmModel(enc, hyper)
        obj = JointObjective(model, ds, 1.0, theta_bandwidth=median_heuristic(encode(model, ds)))
        flat = model.flat()
        _, grad = obj(flat)
        fd = central_difference(lambda v: obj(v)[0], flat, range(len(flat)))
        errs.append(_rel(grad, fd))
    return errs


def ddpg_fd_errors(instances=5, seed=0, coords=40):
    errs = []
    cfg = DdpgConfig(actor_hidden=(8, 6), critic_hidden=(8, 8, 6))
    for k in range(instances):
        rng = np.random.default_rng(seed + k)
        agent = DdpgAgent(2, 1, 1.5, cfg, rng)
        n = 6
        b = Batch(rng.normal(size=(n, 2)), rng.uniform(-1, 1, size=(n, 1)), rng.normal(size=n),
                  rng.normal(size=(n, 2)))
        y = critic_targets(agent, b)
        _, cg = critic_loss_grad(agent, b, y)
        _, ag = actor_objective_grad(agent, b)
        pc, pa = agent.critic.params.copy(), agent.actor.params.copy()

        def fc(p):
            agent.critic.params[:] = p
            return critic_loss_grad(agent, b, y)[0]

        def fa(p):
            agent.actor.params[:] = p
            return actor_objective_grad(agent, b)[0]

        cc = rng.choice(len(pc), min(coords, len(pc)), replace=False)
        ca = rng.choice(len(pa), min(coords, len(pa)), replace=False)
        ec = _rel(cg[cc], central_difference(fc, pc, cc))
        agent.critic.params[:] = pc
        ea = _rel(ag[ca], central_difference(fa, pa, ca))
        agent.actor.params[:] = pa
        errs.append(max(ec, ea))
    return errs


def check_gradients(tol=1e-4):
    j, d = joint_loss_fd_errors(), ddpg_fd_errors()
    worst = max(j + d)
    return CheckResult("gradients vs finite differences", worst < tol,
                       f"joint loss max rel err {max(j):.1e}, ddpg {max(d):.1e} (tol {tol:g})")


def em_violations(datasets=100, seed=0, tol=1e-9):
    """Worst per-iteration log-likelihood decrease over random EM runs."""
    worst, reseeded = 0.0, 0
    for k in range(datasets):
        rng = np.random.default_rng(seed + k)
        Q = int(rng.integers(1, 4))
        N = int(rng.integers(10, 80))
        C = int(rng.integers(1, 6))
        centers = rng.normal(scale=4, size=(C, Q))
        theta = centers[rng.integers(C, size=N)] + rng.normal(scale=rng.uniform(0.2, 2), size=(N, Q))
        m = fit_gmm_em(theta, C, k)
        reseeded += bool(m.reseeds)
        h = m.log_likelihood
        for i in range(1, len(h)):
            if i in m.reseeds:
                continue
            worst = max(worst, h[i - 1] - h[i])
    return worst, reseeded


def check_em(tol=1e-9):
    worst, reseeded = em_violations()
    return CheckResult("em monotonicity", worst <= tol,
                       f"largest decrease {worst:.1e} over 100 fits ({reseeded} with re-seeding)")


def check_allocation(rows=1000, seed=0):
    rng = np.random.default_rng(seed)
    bad = 0
    for B in (1, 64, 192):
        for _ in range(rows):
            k = rng.dirichlet(np.ones(int(rng.integers(1, 30))))
            out = allocate_batch(k, B)
            bad += int(out.sum() != B or np.any(out < 0) or np.any(np.abs(out - B * k) >= 1))
    return CheckResult("allocation exactness", bad == 0, f"{bad} bad rows of {3 * rows}")


def env_violations(rollouts=100, steps=200, energy_steps=1000):
    """Counts of trig, reward-bound and energy-audit violations across seeded rollouts."""
    trig = bounds = 0
    worst_drift = 0.0
    for kind in E.KINDS:
        for seed in range(rollouts):
            rng = np.random.default_rng(seed)
            spec = E.default_spec(kind, wind=float(rng.uniform(-4, 4)), gravity=float(rng.uniform(7, 16)),
                                  target=float(rng.uniform(-5, 5)))
            lo, hi = E.reward_bounds(spec)
            s = E.reset(spec, rng)
            for _ in range(steps):
                s, r = E.step(spec, s, rng.uniform(-1.5, 1.5) * spec.action_bound, rng)
                bounds += not (lo <= r <= hi)
                if kind == "pendulum_wind":
                    trig += abs(s[0] ** 2 + s[1] ** 2 - 1) > 1e-9 or abs(s[2]) > 8
                elif kind == "cartpole_gravity":
                    trig += abs(s[2] ** 2 + s[3] ** 2 - 1) > 1e-9
        # angle wrapping agrees with the trig functions everywhere
        th = np.random.default_rng(0).uniform(-50, 50, 1000)
        w = E.angle_normalize(th)
        trig += int(np.sum((w < -np.pi) | (w >= np.pi) | (np.abs(np.sin(w) - np.sin(th)) > 1e-9)))
    for seed in range(rollouts):
        rng = np.random.default_rng(seed)
        g = float(rng.uniform(7.82, 15.82))
        spec = E.default_spec("cartpole_gravity", gravity=g, noise_sd=0.0)
        s = E.reset(spec, rng)
        e0 = E.cartpole_energy(g, s[0], s[1], np.arctan2(s[3], s[2]), s[4])
        for _ in range(energy_steps):
            s, _ = E.step(spec, s, 0.0)
            e = E.cartpole_energy(g, s[0], s[1], np.arctan2(s[3], s[2]), s[4])
            worst_drift = max(worst_drift, abs(e - e0) / abs(e0))
    return trig, bounds, worst_drift


def check_envs(drift_tol=0.02):
    trig, bounds, drift = env_violations()
    ok = trig == 0 and bounds == 0 and drift <= drift_tol
    return CheckResult("environment invariants", ok,
                       f"trig violations {trig}, reward-bound violations {bounds}, "
                       f"worst cart-pole energy drift {drift:.2%}")


ALL_CHECKS = (check_hsic, check_gradients, check_em, check_allocation, check_envs)


def run_checks():
    return [c() for c in ALL_CHECKS]
