"""End-to-end experiment pipeline and artifact writing.

Per seed: sample the environments, build the cause/effect dataset, extract
``Theta``, cluster it, turn the similarity into per-agent batch quotas and
run concurrent DDPG training.  Every file is written through a temporary file
and renamed into place.
"""

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.metrics import adjusted_rand_score, silhouette_score

from . import config as C
from . import envs as E
from .agents import DdpgAgent, ShareScheme, agent_rngs, train_concurrent
from .anm_mm import fit
from .clustering import build_allocation, fit_gmm_auto, fit_gmm_em, hard_labels
from .data import generate_cause_effect

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def base_spec(cfg):
    return E.default_spec(cfg.task, **cfg.env)


def env_groups(cfg):
    param = cfg.hidden_param
    return [E.GroupSpec(g.mean, g.sd, g.count, param) for g in cfg.groups]


def _seeds(seed):
    ss = np.random.SeedSequence(int(seed))
    env_ss, data_ss, anm_ss, gmm_ss, init_ss, train_ss = ss.spawn(6)
    return dict(
        env=int(env_ss.generate_state(1)[0]),
        data=np.random.default_rng(data_ss),
        anm=int(anm_ss.generate_state(1)[0]),
        gmm=int(gmm_ss.generate_state(1)[0]),
        init=int(init_ss.generate_state(1)[0]),
        train=int(train_ss.generate_state(1)[0]),
    )


def clustering_quality(theta, labels, C=None, seed=0):
    """ARI of GMM hard labels against ``labels`` and the silhouette of ``Theta``.

    A single true or predicted cluster gives an ARI of 0; the silhouette is 0
    when it is undefined.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 1:
        theta = theta[:, None]
    labels = np.asarray(labels)
    C = C or len(np.unique(labels))
    pred = hard_labels(fit_gmm_em(theta, C, seed), theta)
    return partition_quality(theta, labels, pred)


def partition_quality(theta, labels, pred):
    theta = np.asarray(theta, dtype=np.float64).reshape(len(pred), -1)
    n_true, n_pred = len(np.unique(labels)), len(np.unique(pred))
    ari = 0.0 if (n_true < 2 or n_pred < 2) else float(adjusted_rand_score(labels, pred))
    sil = float(silhouette_score(theta, pred)) if 2 <= n_pred < len(pred) else 0.0
    return ari, sil


@dataclass
class Extraction:
    envs: E.SampledEnvs
    dataset: object
    fit: object
    gmm: object
    allocation: object
    ari: float
    silhouette: float


def extract(cfg, seed):
    """Stages up to the batch allocation for one seed."""
    sd = _seeds(seed)
    stage = "sample_envs"
    try:
        envs = E.sample_env_group(env_groups(cfg), base_spec(cfg), sd["env"])
        stage = "cause_effect"
        ds = generate_cause_effect(envs, cfg.data.P, cfg.data.interval, cfg.data.effect, sd["data"],
                                   method=cfg.data.method, rollout_factor=cfg.data.rollout_factor,
                                   segment_length=cfg.data.segment_length)
        stage = "anm_mm"
        anm_seed = int(np.random.SeedSequence([sd["anm"], cfg.anm.seed]).generate_state(1)[0])
        res = fit(ds, replace(cfg.anm, seed=anm_seed))
        stage = "gmm"
        c = cfg.clustering.C
        if c == "auto":
            gmm = fit_gmm_auto(res.theta, sd["gmm"], cfg.clustering.max_C)
        else:
            gmm = fit_gmm_em(res.theta, len(cfg.groups) if c == "groups" else int(c), sd["gmm"])
        stage = "allocation"
        alloc = build_allocation(gmm, res.theta, cfg.train.batch_size)
        ari, sil = partition_quality(res.theta, envs.labels, hard_labels(gmm, res.theta))
    except Exception as exc:
        raise PipelineError(stage, exc) from exc
    return Extraction(envs, ds, res, gmm, alloc, ari, sil)


def make_agents(cfg, specs, seed):
    rngs = agent_rngs(_seeds(seed)["init"], len(specs))
    return [DdpgAgent(s.state_dim, 1, s.action_bound, cfg.ddpg, g) for s, g in zip(specs, rngs)]


def train(cfg, seed, envs, allocation=None, record_states=False):
    specs = envs.specs
    K_bar = allocation.K_bar if allocation is not None else None
    scheme = ShareScheme(cfg.scheme, K_bar=K_bar)
    agents = make_agents(cfg, specs, seed)
    rngs = agent_rngs(_seeds(seed)["train"], len(specs))
    try:
        return train_concurrent(envs, agents, scheme, cfg.train, rngs, record_states=record_states)
    except Exception as exc:
        raise PipelineError("train", exc) from exc


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

@dataclass
class RunArtifacts:
    out: Path
    files: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    extractions: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _theta_csv(ex):
    theta = ex.fit.theta
    header = ["agent_id", "group_label"] + [f"theta_{q}" for q in range(theta.shape[1])]
    rows = [[n, int(ex.envs.labels[n]), *theta[n]] for n in range(theta.shape[0])]
    return csv_text(header, rows)


def _matrix_csv(M, prefix):
    header = ["agent_id"] + [f"{prefix}{q}" for q in range(M.shape[1])]
    return csv_text(header, [[n, *row] for n, row in enumerate(M)])


def _gmm_csv(gmm):
    Q = gmm.means.shape[1]
    header = ["component", "weight"] + [f"mean_{q}" for q in range(Q)] + [f"var_{q}" for q in range(Q)]
    rows = [[c, gmm.weights[c], *gmm.means[c], *gmm.variances[c]] for c in range(gmm.C)]
    return csv_text(header, rows)


def _write(art, rel, text):
    write_atomic(art.out / rel, text)
    art.files.append(str(rel))


def run_pipeline(cfg, out=None, do_train=True, record_states=False):
    """Run every seed of ``cfg`` and write artifacts below ``out`` (default ``cfg.out``).

    Layout::

        config.yaml            resolved configuration
        curves.csv             epoch, agent_id, group_label, episode_return, scheme, seed
        metrics.json           clustering quality and final returns per seed
        warnings.log
        seed_<s>/theta.csv, allocation.csv, similarity.csv, gmm.csv, model.npz
    """
    cfg.validate()
    art = RunArtifacts(Path(out or cfg.out))
    art.out.mkdir(parents=True, exist_ok=True)
    _write(art, "config.yaml", C.dumps(cfg))
    need_extraction = cfg.scheme == "similarity" or not do_train
    curve_rows = []
    try:
        for seed in cfg.seeds:
            sub = Path(f"seed_{seed}")
            metrics = {}
            if need_extraction:
                ex = extract(cfg, seed)
                art.extractions[seed] = ex
                envs = ex.envs
                _write(art, sub / "theta.csv", _theta_csv(ex))
                _write(art, sub / "allocation.csv", _matrix_csv(ex.allocation.K_bar, "from_"))
                _write(art, sub / "similarity.csv", _matrix_csv(ex.allocation.K_hat, "from_"))
                _write(art, sub / "gmm.csv", _gmm_csv(ex.gmm))
                _save_model(art, sub / "model.npz", ex)
                metrics.update(ari=ex.ari, silhouette=ex.silhouette, hsic=ex.fit.info.hsic)
                if ex.fit.info.hsic_clamped:
                    art.warnings.append(f"seed {seed}: HSIC clamped at floor")
                allocation = ex.allocation
            else:
                try:
                    envs = E.sample_env_group(env_groups(cfg), base_spec(cfg), _seeds(seed)["env"])
                except Exception as exc:
                    raise PipelineError("sample_envs", exc) from exc
                allocation = None
            if do_train:
                lg = train(cfg, seed, envs, allocation, record_states)
                art.logs[seed] = lg
                for e in range(lg.epochs):
                    for n in range(lg.returns.shape[1]):
                        curve_rows.append([e, n, int(envs.labels[n]), lg.returns[e, n], cfg.scheme, seed])
                k = max(1, lg.epochs // 10)
                metrics["final_return"] = float(lg.returns[-k:].mean()) if lg.epochs else float("nan")
                if lg.reallocated:
                    art.warnings.append(f"seed {seed}: {lg.reallocated} quota units moved to own buffer")
                if any(lg.divergences):
                    art.warnings.append(f"seed {seed}: skipped updates per agent {lg.divergences}")
            art.metrics[str(seed)] = metrics
    except PipelineError as exc:
        write_atomic(art.out / "FAILED", f"{exc}\n")
        raise
    if do_train:
        _write(art, "curves.csv", csv_text(
            ["epoch", "agent_id", "group_label", "episode_return", "scheme", "seed"], curve_rows))
    _write(art, "metrics.json", json.dumps(art.metrics, indent=2, sort_keys=True) + "\n")
    _write(art, "warnings.log", "".join(w + "\n" for w in art.warnings))
    return art


def _save_model(art, rel, ex):
    path = art.out / rel
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".npz")
    os.close(fd)
    m = ex.fit.model
    np.savez(tmp, flat=m.flat(), layer_sizes=np.array(m.encoder.layer_sizes),
             z_shift=m.z_shift, z_scale=m.z_scale, theta=ex.fit.theta)
    os.replace(tmp, path)
    art.files.append(str(rel))
