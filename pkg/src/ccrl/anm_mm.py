"""Latent mechanism extraction with a back-constrained GP-LVM and an HSIC penalty.

Each agent contributes one row: its cause samples ``x_n`` and effect samples
``y_n``.  An MLP encoder maps ``z_n = [x_n, y_n]`` to a low dimensional
``theta_n``; a GP over the inputs ``[x_n, theta_n]`` has to reconstruct
``y_n``, while ``lam * log HSIC(X, Theta)`` pushes ``Theta`` to be
independent of the cause.  Encoder weights and GP hyperparameters are fitted
jointly with scaled conjugate gradients.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .diffcore import FeedForwardNet, init_normal, scg
from .errors import InvalidInputError, NumericalError
from .kernels import KernelParams, double_center, median_heuristic, sq_dists

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
HSIC_FLOOR = 1e-12
# log hyperparameters beyond this are treated as an infeasible point
MAX_LOG_HYPER = 30.0
JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass
class CauseEffectDataset:
    """Cause ``X`` and effect ``Y``, both ``N x P`` (one row per agent)."""

    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=np.float64))
        if self.X.shape != self.Y.shape:
            raise InvalidInputError(f"X {self.X.shape} and Y {self.Y.shape} differ in shape")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise InvalidInputError("dataset contains non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def P(self):
        return self.X.shape[1]

    def permuted(self, order):
        labels = None if self.labels is None else self.labels[order]
        return CauseEffectDataset(self.X[order], self.Y[order], labels)


@dataclass
class AnmMmConfig:
    latent_dim: int = 1
    lam: float = 1.0
    encoder_hidden: int = 20
    max_iters: int = 500
    seed: int = 0
    # bandwidth of the Theta kernel in the HSIC term is refreshed this often
    outer_iters: int = 5
    init_sd: float = 0.1

    def __post_init__(self):
        if self.latent_dim < 1:
            raise InvalidInputError("latent_dim must be >= 1")
        if not self.lam > 0:
            raise InvalidInputError("lam must be positive")
        if self.max_iters < 0 or self.outer_iters < 1 or self.encoder_hidden < 1:
            raise InvalidInputError("bad iteration or width settings")


@dataclass
class GpHyper:
    kernel: KernelParams
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidInputError("noise precision beta must be positive")

    def to_log(self):
        return np.log([self.kernel.lengthscale, self.kernel.variance, self.beta])

    @classmethod
    def from_log(cls, v):
        ell, var, beta = np.exp(np.asarray(v, dtype=np.float64))
        return cls(KernelParams(float(ell), float(var)), float(beta))


@dataclass
class AnmMmModel:
    encoder: FeedForwardNet
    gp_hyper: GpHyper
    # affine map applied to [X, Y] blocks before the encoder
    z_shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    z_scale: np.ndarray = field(default_factory=lambda: np.ones(2))

    def flat(self):
        return np.concatenate([self.encoder.params, self.gp_hyper.to_log()])

    def with_flat(self, v):
        enc = FeedForwardNet(self.encoder.layer_sizes, self.encoder.activations,
                             np.array(v[:self.encoder.n_params]))
        return AnmMmModel(enc, GpHyper.from_log(v[self.encoder.n_params:]),
                          self.z_shift.copy(), self.z_scale.copy())


def make_encoder(P, hidden, latent_dim):
    return FeedForwardNet([2 * P, hidden, latent_dim], ["tanh", "linear"])


def encoder_input(model, dataset):
    P = dataset.P
    if model.encoder.n_in != 2 * P:
        raise InvalidInputError(f"encoder expects {model.encoder.n_in} inputs, dataset gives {2 * P}")
    Xs = (dataset.X - model.z_shift[0]) / model.z_scale[0]
    Ys = (dataset.Y - model.z_shift[1]) / model.z_scale[1]
    return np.hstack([Xs, Ys])


def encode(model, dataset):
    """``Theta = E_w([X, Y])``, one row per agent."""
    return model.encoder.forward(encoder_input(model, dataset))


def _cholesky_with_jitter(K):
    n = K.shape[0]
    for jit in JITTERS:
        try:
            return np.linalg.cholesky(K + jit * np.eye(n) if jit else K), jit
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("GP covariance is not positive definite even with jitter 1e-4")


def _gp_terms(d2, Y, hyper):
    """NLL plus the pieces needed for its gradient, given squared distances."""
    ell = hyper.kernel.lengthscale
    Kf = hyper.kernel.variance * np.exp(-d2 / (2.0 * ell ** 2))
    N, D = Y.shape
    Kt = Kf + np.eye(N) / hyper.beta
    L, _ = _cholesky_with_jitter(Kt)
    alpha = cho_solve((L, True), Y)
    nll = 0.5 * D * N * LOG_2PI + D * np.log(np.diag(L)).sum() + 0.5 * np.sum(Y * alpha)
    Kinv = cho_solve((L, True), np.eye(N))
    G = 0.5 * (D * Kinv - alpha @ alpha.T)
    return nll, Kf, G


def gp_neg_log_likelihood(X_tilde, Y, gp_hyper):
    """``DN/2 ln 2pi + D/2 ln|K| + 1/2 tr(K^-1 Y Y^T)`` with an RBF + noise covariance."""
    X_tilde = np.atleast_2d(np.asarray(X_tilde, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X_tilde.shape[0] != Y.shape[0]:
        raise InvalidInputError("X_tilde and Y must have the same number of rows")
    nll, _, _ = _gp_terms(sq_dists(X_tilde), Y, gp_hyper)
    return float(nll)


def _pair_grad(A, T, ell):
    # d/dT of sum(G * k(T)) for an RBF k with lengthscale ell, where A = G * k
    return -(2.0 / ell ** 2) * (A.sum(1)[:, None] * T - A @ T)


@dataclass
class LossInfo:
    nll: float
    hsic: float
    hsic_clamped: bool


class JointObjective:
    """Callable ``flat -> (loss, grad)`` for fixed data and HSIC bandwidths.

    ``flat`` holds the encoder weights followed by the log lengthscale, log
    variance and log noise precision of the GP.
    """

    def __init__(self, template, dataset, lam, Y_gp=None, x_bandwidth=None, theta_bandwidth=None):
        self.template = template
        self.lam = float(lam)
        self.N = dataset.N
        self.Z = encoder_input(template, dataset)
        self.Y = dataset.Y if Y_gp is None else Y_gp
        self.d2x = sq_dists(dataset.X)
        bx = median_heuristic(dataset.X) if x_bandwidth is None else x_bandwidth
        Kx = np.exp(-self.d2x / (2.0 * bx ** 2))
        self.Kx_c = double_center(Kx)
        self.x_bandwidth = bx
        self.theta_bandwidth = theta_bandwidth
        self.n_enc = template.encoder.n_params
        self.last_info = None

    def refresh_bandwidth(self, flat):
        self.theta_bandwidth = median_heuristic(self.theta(flat))

    def theta(self, flat):
        enc = self.template.encoder
        net = FeedForwardNet(enc.layer_sizes, enc.activations, np.asarray(flat[:self.n_enc]))
        return net.forward(self.Z)

    def __call__(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        enc = self.template.encoder
        net = FeedForwardNet(enc.layer_sizes, enc.activations, flat[:self.n_enc])
        logs = flat[self.n_enc:]
        if np.any(np.abs(logs) > MAX_LOG_HYPER) or not np.all(np.isfinite(flat)):
            return np.inf, np.full(flat.shape, np.nan)
        hyper = GpHyper.from_log(logs)
        T, cache = net.forward(self.Z, keep=True)
        d2t = sq_dists(T)
        try:
            nll, Kf, G = _gp_terms(self.d2x + d2t, self.Y, hyper)
        except NumericalError:
            return np.inf, np.full(flat.shape, np.nan)
        A = G * Kf
        ell = hyper.kernel.lengthscale
        dT = _pair_grad(A, T, ell)
        g_hyp = np.array([
            np.sum(A * (self.d2x + d2t)) / ell ** 2,
            np.sum(A),
            -np.trace(G) / hyper.beta,
        ])

        bt = self.theta_bandwidth if self.theta_bandwidth is not None else median_heuristic(T)
        Lt = np.exp(-d2t / (2.0 * bt ** 2))
        hs = float(np.sum(self.Kx_c * Lt)) / self.N ** 2
        clamped = hs < HSIC_FLOOR
        loss = nll + self.lam * np.log(max(hs, HSIC_FLOOR))
        if not clamped:
            Ah = (self.lam / (hs * self.N ** 2)) * self.Kx_c * Lt
            dT = dT + _pair_grad(Ah, T, bt)
        g_enc, _ = net.backward(cache, dT)
        self.last_info = LossInfo(float(nll), hs, bool(clamped))
        return float(loss), np.concatenate([g_enc, g_hyp])


def _preprocess(dataset, P, config, rng):
    z_shift = np.array([dataset.X.mean(), dataset.Y.mean()])
    z_scale = np.array([dataset.X.std(), dataset.Y.std()])
    z_scale[z_scale <= 0] = 1.0
    encoder = init_normal(make_encoder(P, config.encoder_hidden, config.latent_dim), rng, config.init_sd)
    Yc = dataset.Y - dataset.Y.mean(0)
    var = max(float(Yc.var(0).mean()), 1e-6)
    model = AnmMmModel(encoder, GpHyper(KernelParams(1.0, var), 10.0 / var), z_shift, z_scale)
    T0 = encode(model, dataset)
    ell0 = median_heuristic(np.hstack([dataset.X, T0]))
    model.gp_hyper = GpHyper(KernelParams(ell0, var), 10.0 / var)
    return model, Yc


def joint_loss(model, dataset, lam=1.0, theta_bandwidth=None, x_bandwidth=None):
    """Loss ``-log L + lam * log HSIC_b(X, Theta)`` and its gradient.

    Returns ``(loss, grad, info)``; ``grad`` is over :meth:`AnmMmModel.flat`.
    The GP sees ``dataset.Y`` as given (no centering).  HSIC bandwidths default
    to the median heuristic at the current point and are held fixed when
    differentiating.
    """
    obj = JointObjective(model, dataset, lam, x_bandwidth=x_bandwidth, theta_bandwidth=theta_bandwidth)
    if obj.theta_bandwidth is None:
        obj.theta_bandwidth = median_heuristic(encode(model, dataset))
    loss, grad = obj(model.flat())
    return loss, grad, obj.last_info


@dataclass
class FitResult:
    model: AnmMmModel
    theta: np.ndarray
    # (loss at start, loss at end) of every outer round, each under its own bandwidth
    rounds: list
    info: LossInfo


def fit(dataset, config=None):
    """Fit encoder and GP hyperparameters; returns a :class:`FitResult`.

    The effect matrix is centred column-wise before entering the GP and the
    ``[X, Y]`` blocks are standardised (one scalar shift and scale per block)
    before entering the encoder.
    """
    config = config or AnmMmConfig()
    if dataset.N < 2:
        raise InvalidInputError("need at least two agents")
    rng = np.random.default_rng(config.seed)
    model, Yc = _preprocess(dataset, dataset.P, config, rng)
    obj = JointObjective(model, dataset, config.lam, Y_gp=Yc)
    flat = model.flat()
    rounds = []
    per_round = int(np.ceil(config.max_iters / config.outer_iters)) if config.max_iters else 0
    for _ in range(config.outer_iters if config.max_iters else 0):
        obj.refresh_bandwidth(flat)
        res = scg(obj, flat, max_iters=per_round, tol=1e-6)
        rounds.append((res.history[0], res.fun))
        flat = res.x
    if obj.theta_bandwidth is None:
        obj.refresh_bandwidth(flat)
    obj(flat)
    model = model.with_flat(flat)
    info = obj.last_info
    if info.hsic_clamped:
        log.warning("HSIC fell below %g and was clamped", HSIC_FLOOR)
    return FitResult(model, encode(model, dataset), rounds, info)
