"""Ready-made experiment configurations for the figure reproductions.

Each preset maps a variant name to a plain config dictionary.  ``desk`` scale
fits a laptop budget; ``full`` matches the original group sizes; ``smoke``
is a few-minute sanity run.  Learning curves use smaller networks than the
full-size DDPG at desk scale so all seeds of a figure finish within minutes.
"""

import copy

from . import config as C

# networks and optimiser settings shared by the desk-scale AR presets
_DESK_DDPG = dict(actor_hidden=[64, 64], critic_hidden=[64, 64, 64], gamma=0.9, tau=0.01,
                  actor_lr=1e-3, critic_lr=1e-3, dtype="float32")

_AR_GROUPS = [dict(mean=-4.0, sd=0.1, count=4), dict(mean=-1.0, sd=0.1, count=4),
              dict(mean=4.0, sd=0.1, count=4)]


def _fig3(scale):
    count = {"desk": 20, "full": 20, "smoke": 5}[scale]
    return {"extract": dict(
        name="fig3", task="ar", env=dict(horizon=100),
        groups=[dict(g, count=count) for g in _AR_GROUPS],
        data=dict(P=100 if scale != "smoke" else 30, interval=[-10.0, 10.0]),
        scheme="similarity", seeds=[0, 1, 2], out="runs/fig3")}


def _fig2(scale):
    count = {"desk": 4, "full": 20, "smoke": 2}[scale]
    epochs = {"desk": 150, "full": 300, "smoke": 10}[scale]
    batch = {"similarity": 192, "global": 192, "none": 64, "seed_sampling": 192}
    out = {}
    for scheme, B in batch.items():
        out[scheme] = dict(
            name=f"fig2-{scheme}", task="ar", env=dict(horizon=20),
            groups=[dict(g, count=count) for g in _AR_GROUPS],
            data=dict(P=100, interval=[-10.0, 10.0]),
            scheme=scheme,
            train=dict(epochs=epochs, batch_size=B, decay=0.9995),
            ddpg=dict(_DESK_DDPG, gamma=0.95) if scale != "full" else dict(gamma=0.95, tau=0.01, actor_lr=1e-3),
            seeds=[0, 1, 2], out=f"runs/fig2/{scheme}")
    return out


def _fig4(scale):
    count = {"desk": 4, "full": 18, "smoke": 2}[scale]
    epochs = {"desk": 200, "full": 300, "smoke": 10}[scale]
    # rewards reach 100 and states +-40: both are rescaled before the networks see them.
    # The per-agent noise means are wide and the shared OU noise is narrow, so only the
    # coordinated means carry an agent out to the far targets.
    train = dict(batch_size=192, reward_scale=100.0, state_scale=25.0, decay=0.99985,
                 sigma1_scale=1.0, sigma2_scale=0.1)
    ddpg = dict(_DESK_DDPG, actor_lr=1e-4) if scale != "full" else dict(gamma=0.9, tau=0.01)
    out = {}
    for name, coordinated in (("coordinated", True), ("uncoordinated", False)):
        out[name] = dict(
            name=f"fig4-{name}", task="ar_sparse", env=dict(horizon=100, action_bound=2.0),
            groups=[dict(mean=-20.0, sd=0.3, count=count), dict(mean=20.0, sd=0.3, count=count)],
            data=dict(P=100, interval=[-25.0, 25.0]),
            scheme="similarity",
            train=dict(train, epochs=epochs, coordinated=coordinated),
            ddpg=dict(ddpg),
            seeds=[0, 1, 2], out=f"runs/fig4/{name}")
    return out


def _mechanical(task, param_groups, interval, horizon, scale, fig):
    if scale == "full":
        groups = [dict(mean=m, sd=0.1, count=20) for m in param_groups]
        train = dict(epochs=300, batch_size=192)
        ddpg = {}
    else:
        # two groups of two agents, the extremes of the full setting
        groups = [dict(mean=m, sd=0.1, count=2) for m in (param_groups[0], param_groups[-1])]
        train = dict(epochs=30, batch_size=64, steps_per_epoch=horizon)
        ddpg = dict(_DESK_DDPG)
    return {"similarity": dict(
        name=fig, task=task, groups=groups,
        data=dict(P=100, interval=list(interval), effect="next_state"),
        scheme="similarity", train=train, ddpg=ddpg, seeds=[0], out=f"runs/{fig}")}


def _fig5(scale):
    return _mechanical("pendulum_wind", [-4.0, -1.5, 1.5, 4.0], (-8.0, 8.0), 100, scale, "fig5")


def _fig6(scale):
    return _mechanical("cartpole_gravity", [7.82, 11.82, 15.82], (-6.0, 6.0), 150, scale, "fig6")


PRESETS = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6}
SCALES = ("desk", "full", "smoke")


def preset_dicts(fig, scale="desk"):
    if fig not in PRESETS:
        raise C.ConfigError(f"unknown figure {fig!r}; choose from {sorted(PRESETS)}")
    if scale not in SCALES:
        raise C.ConfigError(f"unknown scale {scale!r}")
    return copy.deepcopy(PRESETS[fig](scale))


def preset(fig, scale="desk"):
    """``{variant: ExperimentConfig}`` for one figure."""
    return {k: C.from_dict(v) for k, v in preset_dicts(fig, scale).items()}
