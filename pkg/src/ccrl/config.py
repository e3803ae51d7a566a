"""Experiment configuration: YAML documents mapped onto dataclasses.

Unknown keys anywhere in the document are rejected.  ``dump`` writes the
fully resolved configuration, so parsing the echo gives back an equal object.
"""

import dataclasses
from dataclasses import dataclass, field

import yaml

from .agents import SCHEMES, DdpgConfig, TrainConfig
from .anm_mm import AnmMmConfig
from .envs import HIDDEN_PARAM, KINDS


class ConfigError(ValueError):
    pass


@dataclass
class GroupConfig:
    mean: float
    sd: float
    count: int


@dataclass
class DataConfig:
    P: int = 100
    interval: tuple = (-10.0, 10.0)
    effect: str = "reward"
    method: str = None
    rollout_factor: int = 10
    segment_length: int = 10


@dataclass
class ClusterConfig:
    C: object = "groups"  # int, "groups" (number of env groups) or "auto" (BIC sweep)
    max_C: int = 8


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    task: str = "ar"
    env: dict = field(default_factory=dict)
    groups: list = field(default_factory=list)
    data: DataConfig = field(default_factory=DataConfig)
    anm: AnmMmConfig = field(default_factory=AnmMmConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    scheme: str = "similarity"
    train: TrainConfig = field(default_factory=TrainConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs/experiment"

    def validate(self):
        if self.task not in KINDS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not self.groups:
            raise ConfigError("at least one group is required")
        if self.data.P < 2:
            raise ConfigError("data.P must be >= 2")
        lo, hi = self.data.interval
        if not hi > lo:
            raise ConfigError("data.interval is degenerate")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.data.effect not in ("reward", "next_state"):
            raise ConfigError("data.effect must be reward or next_state")
        c = self.clustering.C
        if not (c in ("groups", "auto") or (isinstance(c, int) and c >= 1)):
            raise ConfigError("clustering.C must be a positive int, 'groups' or 'auto'")
        env_fields = {f.name for f in dataclasses.fields(_env_spec_cls())} - {"kind"}
        bad = set(self.env) - env_fields
        if bad:
            raise ConfigError(f"unknown env keys {sorted(bad)}")
        return self

    @property
    def hidden_param(self):
        return HIDDEN_PARAM[self.task]

    @property
    def n_agents(self):
        return sum(g.count for g in self.groups)


def _env_spec_cls():
    from .envs import EnvSpec
    return EnvSpec


_SECTIONS = {"data": DataConfig, "anm": AnmMmConfig, "clustering": ClusterConfig,
             "train": TrainConfig, "ddpg": DdpgConfig}
_TUPLES = {"interval", "actor_hidden", "critic_hidden"}


def _build(cls, d, where):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {k: (tuple(v) if k in _TUPLES and isinstance(v, list) else v) for k, v in d.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(d) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    kw = dict(d)
    for key, cls in _SECTIONS.items():
        if key in kw:
            kw[key] = _build(cls, kw[key], key)
    kw["groups"] = [_build(GroupConfig, g, f"groups[{i}]") for i, g in enumerate(kw.get("groups", []))]
    if "env" in kw and not isinstance(kw["env"], dict):
        raise ConfigError("env must be a mapping")
    if "seeds" in kw:
        kw["seeds"] = [int(s) for s in kw["seeds"]]
    return ExperimentConfig(**kw).validate()


def _plain(v):
    if dataclasses.is_dataclass(v):
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def to_dict(cfg):
    return _plain(cfg)


def dumps(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def loads(text):
    return from_dict(yaml.safe_load(text))


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
