"""Small dense MLPs with hand-written reverse-mode gradients, plus optimizers.

Matrices are plain 2-D numpy arrays (rows = samples).  A network keeps all of
its weights in one flat vector so that optimizers can treat it as a point in
R^n; per-layer weight and bias arrays are views into that vector.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, OptimizationDiverged

ACTIVATIONS = ("relu", "tanh", "linear")


def _act(tag, z):
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "tanh":
        return np.tanh(z)
    return z


def _act_grad(tag, z, a, g):
    # g is dL/da; returns dL/dz
    if tag == "relu":
        return g * (z > 0)
    if tag == "tanh":
        return g * (1.0 - a * a)
    return g


class FeedForwardNet:
    """Fully connected network ``layer_sizes[0] -> ... -> layer_sizes[-1]``.

    Parameters
    ----------
    layer_sizes : sequence of int
        Widths including the input width, so a net with ``L`` layers has
        ``L + 1`` entries.
    activations : sequence of str
        One of ``relu``, ``tanh``, ``linear`` per layer.
    params : ndarray, optional
        Flat parameter vector; zeros when omitted.  For every layer the
        ``in x out`` weight matrix (row-major) is followed by the ``out`` biases.
    """

    def __init__(self, layer_sizes, activations, params=None, dtype=np.float64):
        layer_sizes = [int(s) for s in layer_sizes]
        activations = list(activations)
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise InvalidInputError(f"bad layer sizes {layer_sizes}")
        if len(activations) != len(layer_sizes) - 1:
            raise InvalidInputError("need one activation per layer")
        for tag in activations:
            if tag not in ACTIVATIONS:
                raise InvalidInputError(f"unknown activation {tag!r}")
        self.layer_sizes = layer_sizes
        self.activations = activations
        self.n_params = sum((i + 1) * o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))
        if params is None:
            params = np.zeros(self.n_params, dtype=dtype)
        self.set_params(params)

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    def set_params(self, params):
        params = np.asarray(params)
        if params.shape != (self.n_params,):
            raise InvalidInputError(f"expected {self.n_params} params, got shape {params.shape}")
        if not np.issubdtype(params.dtype, np.floating):
            params = params.astype(np.float64)
        self.params = params
        self._views = self._split(params)

    def _split(self, flat):
        out = []
        k = 0
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = flat[k:k + i * o].reshape(i, o)
            k += i * o
            b = flat[k:k + o]
            k += o
            out.append((W, b))
        return out

    def layers(self):
        """List of ``(W, b)`` views into the flat parameter vector."""
        return self._views

    def copy(self):
        return FeedForwardNet(self.layer_sizes, self.activations, self.params.copy())

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.params.dtype)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise InvalidInputError(f"input of shape {x.shape} does not fit a net with {self.n_in} inputs")
        return x

    def forward(self, x, keep=False):
        """Evaluate the net on the rows of ``x``.

        With ``keep=True`` also return the cache needed by :meth:`backward`.
        """
        x = self._check_input(x)
        cache = [x]
        a = x
        for (W, b), tag in zip(self._views, self.activations):
            z = a @ W + b
            a = _act(tag, z)
            if keep:
                cache.append((z, a))
        if keep:
            return a, cache
        return a

    def backward(self, cache, output_grad, param_grad=True):
        """Reverse sweep.  Returns ``(flat param gradient or None, input gradient)``."""
        output_grad = np.asarray(output_grad, dtype=self.params.dtype)
        x = cache[0]
        if output_grad.shape != (x.shape[0], self.n_out):
            raise InvalidInputError(f"output_grad shape {output_grad.shape} does not match "
                                    f"({x.shape[0]}, {self.n_out})")
        pgrad = np.empty_like(self.params) if param_grad else None
        gviews = self._split(pgrad) if param_grad else None
        g = output_grad
        for layer in range(len(self._views) - 1, -1, -1):
            W, _ = self._views[layer]
            z, a = cache[layer + 1]
            g = _act_grad(self.activations[layer], z, a, g)
            a_prev = cache[layer][1] if layer > 0 else x
            if param_grad:
                gW, gb = gviews[layer]
                np.matmul(a_prev.T, g, out=gW)
                gb[:] = g.sum(axis=0)
            g = g @ W.T
        return pgrad, g


def init_fan_in(net, rng, final_scale=3e-3):
    """Uniform fan-in initialisation; the last layer uses ``+-final_scale``."""
    p = np.empty(net.n_params, dtype=net.params.dtype)
    views = net._split(p)
    for k, (W, b) in enumerate(views):
        bound = final_scale if k == len(views) - 1 else 1.0 / np.sqrt(W.shape[0])
        W[:] = rng.uniform(-bound, bound, size=W.shape)
        b[:] = rng.uniform(-bound, bound, size=b.shape)
    net.set_params(p)
    return net


def init_normal(net, rng, sd=0.1):
    net.set_params(rng.normal(0.0, sd, size=net.n_params).astype(net.params.dtype))
    return net


def net_forward(net, input):
    return net.forward(input)


def net_backward(net, input, output_grad):
    """Gradients of ``sum(output_grad * net(input))`` w.r.t. params and input."""
    _, cache = net.forward(input, keep=True)
    return net.backward(cache, output_grad)


# ---------------------------------------------------------------------------
# Scaled conjugate gradient (Moller 1993)
# ---------------------------------------------------------------------------

@dataclass
class ScgResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    nit: int
    history: list = field(default_factory=list)
    converged: bool = False


def _evaluate(loss, x, last_good):
    f, g = loss(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise OptimizationDiverged("non-finite loss or gradient", params=last_good[0],
                                   loss=last_good[1])
    return f, g


def scg(loss, init, max_iters=500, tol=1e-6, sigma0=1e-4, xtol=0.0, ftol=0.0, max_bad_trials=50):
    """Minimise ``loss`` with Moller's scaled conjugate gradient.

    ``loss(x)`` must return ``(value, gradient)``.  Steps are only accepted
    when the comparison ratio is non-negative, so the returned value never
    exceeds the initial one.  The search direction restarts along the
    steepest descent direction after ``len(init)`` successful steps.

    A non-finite value at a trial point counts as a rejected step.  A
    non-finite value at the start, at a gradient probe, or more than
    ``max_bad_trials`` rejected trials in a row raise
    :class:`OptimizationDiverged` carrying the last finite point.
    """
    x = np.array(init, dtype=np.float64)
    n = x.size
    fold, gnew = _evaluate(loss, x, (x.copy(), None))
    good = (x.copy(), fold)
    history = [fold]
    gold = gnew
    d = -gnew
    success = True
    nsuccess = 0
    beta = 1.0
    betamin, betamax = 1e-15, 1e100
    mu = kappa = gamma = 0.0
    bad_trials = 0
    it = 0
    if np.linalg.norm(gnew) < tol:
        return ScgResult(x, fold, float(np.linalg.norm(gnew)), 0, history, True)
    while it < max_iters:
        it += 1
        if success:
            mu = d @ gnew
            if mu >= 0:
                d = -gnew
                mu = d @ gnew
            kappa = d @ d
            if kappa < np.finfo(float).eps:
                return ScgResult(x, fold, float(np.linalg.norm(gnew)), it, history, True)
            sigma = sigma0 / np.sqrt(kappa)
            _, gplus = _evaluate(loss, x + sigma * d, good)
            gamma = d @ (gplus - gnew) / sigma
        delta = gamma + beta * kappa
        if delta <= 0:
            delta = beta * kappa
            beta = beta - gamma / kappa
        alpha = -mu / delta
        xnew = x + alpha * d
        fnew, gtrial = loss(xnew)
        fnew = float(fnew)
        if np.isfinite(fnew) and np.all(np.isfinite(gtrial)):
            ratio = 2.0 * (fnew - fold) / (alpha * mu)
            bad_trials = 0
        else:
            # overshoot into a non-finite region: reject and shrink the step
            ratio = -np.inf
            bad_trials += 1
            if bad_trials > max_bad_trials:
                raise OptimizationDiverged("repeated non-finite trial losses", params=good[0],
                                           loss=good[1])
        if ratio >= 0 and fnew <= fold:
            success = True
            nsuccess += 1
            step = alpha * d
            x = xnew
            fprev = fold
            fold = fnew
            good = (x.copy(), fold)
            history.append(fold)
            gold = gnew
            gnew = np.asarray(gtrial, dtype=np.float64)
            gnorm = np.linalg.norm(gnew)
            if gnorm < tol:
                return ScgResult(x, fold, float(gnorm), it, history, True)
            if xtol > 0 and np.max(np.abs(step)) < xtol and abs(fprev - fnew) < ftol:
                return ScgResult(x, fold, float(gnorm), it, history, True)
        else:
            success = False
        if ratio < 0.25:
            beta = min(4.0 * beta, betamax)
        if ratio > 0.75:
            beta = max(0.5 * beta, betamin)
        if nsuccess == n:
            d = -gnew
            nsuccess = 0
        elif success:
            gam = (gold - gnew) @ gnew / mu
            d = gam * d - gnew
    return ScgResult(x, fold, float(np.linalg.norm(gnew)), it, history, False)


def optimize_scg(loss, init, max_iters=500, tol=1e-6):
    """Contract-level wrapper around :func:`scg` returning only the parameters."""
    return scg(loss, init, max_iters=max_iters, tol=tol).x


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, dtype=np.float64, **kw):
        return cls(np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype), **kw)


def adam_step(state, params, grad, lr):
    """One bias-corrected Adam step, applied in place to ``params``.

    An all-zero gradient leaves both ``params`` and ``state`` untouched.
    """
    if grad.shape != params.shape:
        raise InvalidInputError("gradient and params differ in shape")
    if not np.all(np.isfinite(grad)):
        raise InvalidInputError("non-finite gradient")
    if not np.any(grad):
        return params, state
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1 - b1) * grad
    state.v *= b2
    state.v += (1 - b2) * grad * grad
    step = lr * np.sqrt(1 - b2 ** state.t) / (1 - b1 ** state.t)
    params -= step * state.m / (np.sqrt(state.v) + state.eps)
    return params, state


optimize_adaptive_step = adam_step
